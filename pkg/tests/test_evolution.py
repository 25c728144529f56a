from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from commit_stream import make_diff, read_tree, revisions, write_files
from conftest import MINI_SKLEARN
from graphgen import random_graph
from rpgkit.codeindex import scan_repository
from rpgkit.evolution import (
    DiffError,
    UpdateError,
    apply_commit,
    delete_node,
    insert_node,
    parse_diff,
    parse_unified_diff,
)
from rpgkit.extractor import build, build_from_entities
from rpgkit.graph import RpgGraph, RpgNode, high_node_id, low_node_id, serialize, validate
from rpgkit.semantic import DeterministicProvider, TokenAccount


def scan_pair(tmp_path: Path, old: dict, new: dict):
    a = write_files(tmp_path / "before", old)
    b = write_files(tmp_path / "after", new)
    return scan_repository(a), scan_repository(b)


def events_of(tmp_path: Path, old: dict, new: dict) -> list[tuple[str, str]]:
    before, after = scan_pair(tmp_path, old, new)
    return [(ev.kind, str(ev.entity)) for ev in parse_diff(make_diff(old, new), before, after)]


# -- diff parsing -----------------------------------------------------------


def test_hunk_inside_function_is_one_modify(tmp_path: Path) -> None:
    old = {"m.py": "def f():\n    return 1\n\n\ndef g():\n    return 2\n"}
    new = {"m.py": "def f():\n    return 10\n\n\ndef g():\n    return 2\n"}
    assert events_of(tmp_path, old, new) == [("modify", "m.py:f")]


def test_new_file_with_two_functions(tmp_path: Path) -> None:
    new = {"m.py": "def f(): pass\n", "n.py": "def a(): pass\n\n\ndef b(): pass\n"}
    got = events_of(tmp_path, {"m.py": "def f(): pass\n"}, new)
    assert got == [("insert", "n.py"), ("insert", "n.py:a"), ("insert", "n.py:b")]


# worked out by walking the fixture diffs line by line
STREAM_EVENTS = {
    3: [
        ("delete", "sklearn/linear_model/base.py:_center"),
        ("modify", "sklearn/linear_model/base.py"),
        ("modify", "sklearn/linear_model/base.py:LinearRegression.fit"),
    ],
    5: [
        ("modify", "sklearn/preprocessing/label.py:LabelEncoder.transform"),
        ("modify", "sklearn/utils/validation.py:_num_samples"),
    ],
}


@pytest.mark.parametrize("commit", sorted(STREAM_EVENTS))
def test_fixture_commit_events(tmp_path: Path, commit: int) -> None:
    revs = revisions(read_tree(MINI_SKLEARN))
    assert events_of(tmp_path, revs[commit - 1], revs[commit]) == STREAM_EVENTS[commit]


def test_unified_diff_header_forms() -> None:
    text = (
        "diff --git a/old.py b/new.py\n"
        "rename from old.py\n"
        "rename to new.py\n"
        "diff --git a/x.py b/x.py\n"
        "--- a/x.py\n"
        "+++ b/x.py\n"
        "@@ -2,2 +2,3 @@\n"
        " keep\n"
        "-gone\n"
        "+new1\n"
        "+new2\n"
    )
    fds = parse_unified_diff(text)
    assert [(f.old_path, f.new_path) for f in fds] == [("old.py", "new.py"), ("x.py", "x.py")]
    assert fds[1].old_lines == {3} and fds[1].new_lines == {3, 4}


def test_malformed_hunk_is_located() -> None:
    with pytest.raises(DiffError) as info:
        parse_unified_diff("--- a/x.py\n+++ b/x.py\n@@ -1,2 +1,2 @@\n-a\n")
    assert info.value.line > 0


# -- deletion ---------------------------------------------------------------


def two_sub_graph() -> RpgGraph:
    g = RpgGraph()
    area, cat = high_node_id("A"), high_node_id("A/c")
    g.add_node(RpgNode(area, "high", "area", ["a"], name="A"))
    g.add_node(RpgNode(cat, "high", "category", ["c"], name="c"), area)
    for s in ("s1", "s2"):
        sub = high_node_id(f"A/c/{s}")
        g.add_node(RpgNode(sub, "high", "subcategory", [s], name=s), cat)
        path = f"pkg/{s}.py"
        fid = low_node_id(path, None, "file")
        g.add_node(RpgNode(fid, "low", "file", ["load"], path=path, entity_kind="file"), sub)
        g.add_node(RpgNode(low_node_id(path, "f", "function"), "low", "function", ["load"], path=path,
                           qualified_name="f", entity_kind="function"), fid)
    return g


def test_delete_unknown_id_is_identity() -> None:
    g = two_sub_graph()
    before = serialize(g)
    delete_node(g, "L-nope")
    assert serialize(g) == before


def test_delete_sole_file_prunes_its_subcategory_only() -> None:
    g = two_sub_graph()
    pruned: list[str] = []
    delete_node(g, low_node_id("pkg/s1.py", None, "file"), pruned)
    assert pruned == [high_node_id("A/c/s1")]
    assert high_node_id("A/c") in g.nodes
    assert validate(g).ok


def test_delete_branch_leaf_by_leaf_keeps_area_root() -> None:
    g = two_sub_graph()
    for s in ("s1", "s2"):
        delete_node(g, low_node_id(f"pkg/{s}.py", "f", "function"))
        delete_node(g, low_node_id(f"pkg/{s}.py", None, "file"))
    assert set(g.nodes) == {high_node_id("A")}
    report = validate(g)
    assert report.ok and [n.code for n in report.notes] == ["empty area root"]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_random_delete_sequences_keep_hygiene(seed: int) -> None:
    rng = random.Random(seed)
    g = random_graph(rng)
    for _ in range(rng.randint(1, 12)):
        lows = sorted(n for n, v in g.nodes.items() if v.kind == "low")
        if rng.random() < 0.2 or not lows:
            before = serialize(g)
            delete_node(g, f"L{rng.getrandbits(64):016x}")
            assert serialize(g) == before
            continue
        delete_node(g, rng.choice(lows))
        codes = validate(g, check_grounding=False).codes()
        assert "empty abstract node" not in codes and "forest violated" not in codes


# -- modification and the drift gate ----------------------------------------

WORDS = [f"w{c}" for c in "abcdefghij"]


def doc_for(tokens: list[str]) -> str:
    # at most five words per phrase keeps every phrase well under the word limit
    return "; ".join(" ".join(tokens[i : i + 5]) for i in range(0, len(tokens), 5))


# new docstring token sets chosen so that 1 - |A & B| / |A | B| hits each target
DRIFT_CASES = {
    0.0: WORDS,
    0.3: WORDS[:7],
    0.5: WORDS[:5],
    0.7: WORDS[:3],
    1.0: ["zz", "yy"],
}


def drift_repo(tokens: list[str]) -> dict[str, str]:
    return {
        "pkg/core.py": (
            "class Engine:\n"
            f'    def run(self):\n        """{doc_for(tokens)}"""\n        return 1\n\n'
            '    def stop(self):\n        """Stop engine."""\n        return 0\n'
        ),
        "pkg/util.py": 'def helper():\n    """Help out."""\n    return 2\n',
    }


@pytest.mark.parametrize("drift", sorted(DRIFT_CASES))
def test_drift_gate(tmp_path: Path, drift: float) -> None:
    old, new = drift_repo(WORDS), drift_repo(DRIFT_CASES[drift])
    before, after = scan_pair(tmp_path, old, new)
    provider = DeterministicProvider(mode="docstring")
    g = build_from_entities(before, provider)
    run_id = low_node_id("pkg/core.py", "Engine.run", "method")
    run = after.lookup(("pkg/core.py", "Engine.run", "method"))
    new_phrases = provider.features_for(run, after.own_source(run))
    assert provider.judge_drift(g.nodes[run_id].feature, new_phrases) == pytest.approx(drift)
    g2, report = apply_commit(g, make_diff(old, new), before, after, provider)
    assert (run_id in report.rerouted) == (drift > 0.5)
    # syntax fixes the method's parent either way
    assert g2.parent(run_id) == low_node_id("pkg/core.py", "Engine", "class")
    assert validate(g2).ok


def test_identical_features_leave_position_unchanged(tmp_path: Path) -> None:
    old = drift_repo(WORDS)
    new = {**old, "pkg/util.py": old["pkg/util.py"].replace("return 2", "return 3")}
    before, after = scan_pair(tmp_path, old, new)
    provider = DeterministicProvider()
    g = build_from_entities(before, provider)
    g2, report = apply_commit(g, make_diff(old, new), before, after, provider)
    assert report.applied["modify"] == 1 and not report.rerouted
    assert g2.feature_edge_set() == g.feature_edge_set()


# -- insertion --------------------------------------------------------------


def routing_graph() -> RpgGraph:
    g = RpgGraph()
    for area, phrases in (("Rows", ["load rows"]), ("Users", ["save user"])):
        a, c, s = high_node_id(area), high_node_id(f"{area}/c"), high_node_id(f"{area}/c/s")
        g.add_node(RpgNode(a, "high", "area", phrases, name=area))
        g.add_node(RpgNode(c, "high", "category", phrases, name="c"), a)
        g.add_node(RpgNode(s, "high", "subcategory", phrases, name="s"), c)
        path = f"{area.lower()}/x.py"
        g.add_node(RpgNode(low_node_id(path, None, "file"), "low", "file", phrases, path=path, entity_kind="file"), s)
    return g


def test_insert_file_routes_to_matching_subcategory(tmp_path: Path) -> None:
    from rpgkit.evolution import ChangeEvent

    _, after = scan_pair(tmp_path, {}, {"pkg/new.py": "def load_rows(): pass\n"})
    g = routing_graph()
    ref = after.lookup(("pkg/new.py", None, "file"))
    insert_node(g, ChangeEvent("insert", ref, ""), DeterministicProvider(), after)
    assert g.parent(low_node_id("pkg/new.py", None, "file")) == high_node_id("Rows/c/s")


def test_insert_dissimilar_file_goes_to_fallback(tmp_path: Path) -> None:
    from rpgkit.evolution import ChangeEvent, UpdateReport

    _, after = scan_pair(tmp_path, {}, {"zz/odd.py": "def draw_chart(): pass\n"})
    g = routing_graph()
    report = UpdateReport()
    ref = after.lookup(("zz/odd.py", None, "file"))
    insert_node(g, ChangeEvent("insert", ref, ""), DeterministicProvider(), after, report=report)
    fid = low_node_id("zz/odd.py", None, "file")
    assert g.feature_path(g.parent(fid)) == "Unclassified/general/general"
    assert report.diagnostics and "fallback" in report.diagnostics[0]["issue"]


def test_insert_function_into_existing_file_skips_routing(tmp_path: Path) -> None:
    old = {"pkg/m.py": "def load_rows():\n    pass\n"}
    new = {"pkg/m.py": "def load_rows():\n    pass\n\n\ndef save_rows():\n    pass\n"}
    before, after = scan_pair(tmp_path, old, new)
    acct = TokenAccount(keep_payloads=True)
    provider = DeterministicProvider(account=acct)
    g = build_from_entities(before, provider)
    mark = len(acct.payloads)
    g2, report = apply_commit(g, make_diff(old, new), before, after, provider)
    assert g2.parent(low_node_id("pkg/m.py", "save_rows", "function")) == low_node_id("pkg/m.py", None, "file")
    assert report.applied["insert"] == 1
    assert not [r for r in acct.payloads[mark:] if r.op == "route"]


# -- whole commits ----------------------------------------------------------


def test_empty_diff_is_identity(tmp_path: Path) -> None:
    files = read_tree(MINI_SKLEARN)
    before, after = scan_pair(tmp_path, files, files)
    provider = DeterministicProvider()
    g = build_from_entities(before, provider)
    g2, report = apply_commit(g, "", before, after, provider)
    assert serialize(g2) == serialize(g)
    assert report.prompt_tokens == 0 and sum(report.applied.values()) == 0


def test_rename_prunes_old_and_routes_new(tmp_path: Path) -> None:
    revs = revisions(read_tree(MINI_SKLEARN))
    old, new = revs[3], revs[4]
    before, after = scan_pair(tmp_path, old, new)
    provider = DeterministicProvider()
    g = build_from_entities(before, provider)
    g2, report = apply_commit(g, make_diff(old, new), before, after, provider)
    assert low_node_id("sklearn/metrics/regression.py", None, "file") not in g2.nodes
    assert low_node_id("sklearn/metrics/scores.py", None, "file") in g2.nodes
    assert "empty abstract node" not in validate(g2).codes()
    assert report.applied["delete"] >= 1 and report.applied["insert"] >= 1


class ExplodingProvider(DeterministicProvider):
    def parse_features(self, batch):
        raise RuntimeError("backend down")


def test_failed_update_leaves_graph_untouched(tmp_path: Path) -> None:
    revs = revisions(read_tree(MINI_SKLEARN))
    before, after = scan_pair(tmp_path, revs[0], revs[1])
    g = build_from_entities(before, DeterministicProvider())
    snapshot = serialize(g)
    with pytest.raises(UpdateError) as info:
        apply_commit(g, make_diff(revs[0], revs[1]), before, after, ExplodingProvider())
    assert info.value.stage == "update"
    assert serialize(g) == snapshot


def test_bad_diff_is_a_diff_stage_error(tmp_path: Path) -> None:
    files = {"m.py": "def f(): pass\n"}
    before, after = scan_pair(tmp_path, files, files)
    g = build_from_entities(before, DeterministicProvider())
    with pytest.raises(UpdateError) as info:
        apply_commit(g, "--- a/m.py\n+++ b/m.py\n@@ -1,5 +1,5 @@\n-x\n", before, after, DeterministicProvider())
    assert info.value.stage == "diff"


@pytest.mark.parametrize("mode", ["name", "docstring"])
def test_stream_matches_full_rebuild(tmp_path: Path, mode: str) -> None:
    revs = revisions(read_tree(MINI_SKLEARN))
    provider = DeterministicProvider(mode=mode)
    g = build(write_files(tmp_path / "r0", revs[0]), provider=provider)
    for i in range(1, len(revs)):
        before = scan_repository(tmp_path / f"r{i - 1}")
        after = scan_repository(write_files(tmp_path / f"r{i}", revs[i]))
        g, _ = apply_commit(g, make_diff(revs[i - 1], revs[i]), before, after, provider)
    fresh = build(tmp_path / f"r{len(revs) - 1}", provider=DeterministicProvider(mode=mode))

    def leaves(x):
        return {n.id: n.feature for n in x.nodes.values() if n.kind == "low"}

    def file_edges(x):
        return {(p, c) for p, c in x.feature_edge_set() if x.nodes[p].kind == "low"}

    assert leaves(g) == leaves(fresh)
    assert file_edges(g) == file_edges(fresh)
    assert g.dep_edges == fresh.dep_edges
    assert validate(g).ok
