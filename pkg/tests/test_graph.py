from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from graphgen import random_graph
from rpgkit.extractor import ground
from rpgkit.graph import (
    GraphDepEdge,
    GraphError,
    RpgFormatError,
    RpgGraph,
    RpgNode,
    add_node,
    deserialize,
    high_node_id,
    low_node_id,
    serialize,
    subgraph_view,
    to_document,
    validate,
)


def _high(fp: str, level: str) -> RpgNode:
    return RpgNode(high_node_id(fp), "high", level, [fp.rsplit("/", 1)[-1].lower()], name=fp.rsplit("/", 1)[-1])


def _file(path: str) -> RpgNode:
    return RpgNode(low_node_id(path, None, "file"), "low", "file", ["load data"], path=path, entity_kind="file")


def _fn(path: str, qual: str) -> RpgNode:
    return RpgNode(low_node_id(path, qual, "function"), "low", "function", ["parse row"], path=path,
                   qualified_name=qual, entity_kind="function")


def small_graph() -> RpgGraph:
    g = RpgGraph()
    a, c, s = _high("Data", "area"), _high("Data/io", "category"), _high("Data/io/read", "subcategory")
    add_node(g, a)
    add_node(g, c, a.id)
    add_node(g, s, c.id)
    f = _file("pkg/io.py")
    add_node(g, f, s.id)
    add_node(g, _fn("pkg/io.py", "read"), f.id)
    return g


def test_add_node_rejects_illegal_levels() -> None:
    g = small_graph()
    with pytest.raises(GraphError, match="illegal level pair"):
        add_node(g, _file("x.py"))
    with pytest.raises(GraphError, match="illegal level pair"):
        add_node(g, _fn("x.py", "f"), high_node_id("Data"))
    with pytest.raises(GraphError, match="duplicate"):
        add_node(g, _high("Data", "area"))
    with pytest.raises(GraphError, match="unknown parent"):
        add_node(g, _fn("x.py", "f"), "nope")


def test_add_node_bumps_version() -> None:
    g = small_graph()
    before = g.version
    add_node(g, _fn("pkg/io.py", "write"), low_node_id("pkg/io.py", None, "file"))
    assert g.version == before + 1


def test_small_graph_is_valid() -> None:
    g = small_graph()
    ground(g)
    report = validate(g)
    assert report.ok, report.as_dict()
    assert g.nodes[high_node_id("Data")].grounded_scopes == ["pkg"]


def test_validate_reports_constructed_violations() -> None:
    g = small_graph()
    f = low_node_id("pkg/io.py", None, "file")
    fn = low_node_id("pkg/io.py", "read", "function")
    g.nodes[fn].feature = ["Parse Row"]
    g.add_feature_edge(high_node_id("Data/io"), f)
    g.dep_edges.add(GraphDepEdge(f, high_node_id("Data"), "imports"))
    g.dep_edges.add(GraphDepEdge(f, f, "imports"))
    codes = set(validate(g).codes())
    assert {"forest violated", "unnormalized feature", "dependency on high node", "self edge"} <= codes


def test_validate_flags_empty_subcategory_and_notes_empty_area() -> None:
    g = small_graph()
    g.remove_subtree(low_node_id("pkg/io.py", None, "file"))
    report = validate(g)
    assert "empty abstract node" in report.codes()
    assert [n.code for n in report.notes] == ["empty area root"]


def test_validate_flags_grounding_errors() -> None:
    g = small_graph()
    g.nodes[high_node_id("Data")].grounded_scopes = ["other"]
    assert "scope coverage" in validate(g).codes()
    g.nodes[high_node_id("Data")].grounded_scopes = ["pkg", "pkg/sub"]
    assert "scope antichain" in validate(g).codes()


def test_validate_flags_shallow_file() -> None:
    g = RpgGraph()
    a = _high("A", "area")
    g.add_node(a)
    g.add_detached(_file("a.py"), a.id)
    codes = validate(g).codes()
    assert "illegal level pair" in codes and "abstract depth" in codes


def test_validate_flags_cycle() -> None:
    g = small_graph()
    c, s = high_node_id("Data/io"), high_node_id("Data/io/read")
    g.detach(c)
    g.add_feature_edge(s, c)
    assert "cycle" in validate(g).codes()


def test_empty_graph_round_trips() -> None:
    g = RpgGraph()
    doc = json.loads(serialize(g))
    assert doc == {"version": 0, "nodes": [], "feature_edges": [], "dep_edges": []}
    assert deserialize(serialize(g)) == g
    assert validate(g).ok


def test_serialize_round_trip_is_byte_stable() -> None:
    g = small_graph()
    ground(g)
    data = serialize(g)
    again = deserialize(data)
    assert again == g
    assert serialize(again) == data


def test_serialize_is_independent_of_insertion_order() -> None:
    a = small_graph()
    b = small_graph()
    b.children[high_node_id("Data")].reverse()
    b.version = a.version
    assert serialize(a) == serialize(b)


def test_deserialize_locates_errors() -> None:
    with pytest.raises(RpgFormatError, match="line 1 column"):
        deserialize("{not json")
    doc = to_document(small_graph())
    doc["nodes"][2]["metadata"]["bogus"] = 1
    with pytest.raises(RpgFormatError) as info:
        deserialize(json.dumps(doc))
    assert info.value.location.startswith("nodes[2] (id=")
    doc = to_document(small_graph())
    doc["dep_edges"] = [{"src": doc["nodes"][0]["id"], "dst": "ghost", "kind": "imports"}]
    with pytest.raises(RpgFormatError, match="unknown node id"):
        deserialize(json.dumps(doc))
    doc["dep_edges"] = [{"src": doc["nodes"][0]["id"], "dst": doc["nodes"][0]["id"], "kind": "calls"}]
    with pytest.raises(RpgFormatError, match="dependency kind"):
        deserialize(json.dumps(doc))


def test_subgraph_views_partition_edges() -> None:
    g = random_graph(random.Random(3))
    feat = list(subgraph_view(g, "feature"))
    deps = list(subgraph_view(g, "dependency"))
    assert {(s, d) for s, d, _ in feat} == g.feature_edge_set()
    assert {(s, d, k) for s, d, k in deps} == {(e.src, e.dst, e.kind) for e in g.dep_edges}
    with pytest.raises(ValueError):
        list(subgraph_view(g, "both"))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_random_graphs_round_trip(seed: int) -> None:
    g = random_graph(random.Random(seed))
    ground(g)
    assert validate(g).ok
    data = serialize(g)
    assert deserialize(data) == g
    assert serialize(deserialize(data)) == data


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_every_non_area_has_one_parent(seed: int) -> None:
    g = random_graph(random.Random(seed))
    for nid, node in g.nodes.items():
        ps = g.parents.get(nid, [])
        assert len(ps) == (0 if node.level == "area" else 1)
