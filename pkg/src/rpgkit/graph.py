"""The dual-view planning graph with its validator and canonical JSON form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator

from rpgkit._paths import dir_of, is_path_prefix
from rpgkit.codeindex import DEP_KINDS

HIGH_LEVELS = ("area", "category", "subcategory")
LOW_LEVELS = ("file", "class", "function", "method")

# parent level -> admissible child levels; None is the forest root
CHILD_LEVELS: dict[str | None, tuple[str, ...]] = {
    None: ("area",),
    "area": ("category",),
    "category": ("subcategory",),
    "subcategory": ("file",),
    "file": ("class", "function"),
    # nested definitions follow syntax below the file
    "class": ("method", "class"),
    "function": ("function", "class"),
    "method": ("function", "class"),
}


class GraphError(Exception):
    pass


class RpgFormatError(GraphError):
    """Malformed graph document; ``location`` points into the document."""

    def __init__(self, message: str, location: str = "") -> None:
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


def low_node_id(path: str, qualified_name: str | None, kind: str) -> str:
    digest = hashlib.sha1(f"{path}\0{qualified_name or ''}\0{kind}".encode()).hexdigest()
    return "L" + digest[:16]


def high_node_id(feature_path: str) -> str:
    return "H" + hashlib.sha1(feature_path.encode()).hexdigest()[:16]


@dataclass
class RpgNode:
    """One node: semantic feature phrases plus structural metadata.

    Low nodes carry ``path``/``qualified_name``/``span``/``entity_kind``; high
    nodes carry a ``name`` segment and, once grounded, ``grounded_scopes``.
    """

    id: str
    kind: str
    level: str
    feature: list[str] = field(default_factory=list)
    name: str | None = None
    path: str | None = None
    qualified_name: str | None = None
    span: tuple[int, int] | None = None
    entity_kind: str | None = None
    grounded_scopes: list[str] | None = None

    @property
    def is_high(self) -> bool:
        return self.kind == "high"

    @property
    def code_ref(self) -> str | None:
        if self.kind != "low":
            return None
        return self.path if self.qualified_name is None else f"{self.path}:{self.qualified_name}"

    def metadata(self) -> dict:
        meta: dict = {}
        if self.name is not None:
            meta["name"] = self.name
        if self.path is not None:
            meta["path"] = self.path
        if self.qualified_name is not None:
            meta["qualified_name"] = self.qualified_name
        if self.span is not None:
            meta["span"] = [self.span[0], self.span[1]]
        if self.entity_kind is not None:
            meta["entity_kind"] = self.entity_kind
        if self.grounded_scopes is not None:
            meta["grounded_scopes"] = sorted(self.grounded_scopes)
        return meta


@dataclass(frozen=True, order=True)
class GraphDepEdge:
    src: str
    dst: str
    kind: str


@dataclass
class Finding:
    code: str
    node_ids: list[str]
    message: str

    def as_dict(self) -> dict:
        return {"code": self.code, "node_ids": self.node_ids, "message": self.message}


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)
    # non-violations worth surfacing, e.g. area roots emptied by evolution
    notes: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def __bool__(self) -> bool:
        return bool(self.findings)

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "findings": [f.as_dict() for f in self.findings],
            "notes": [f.as_dict() for f in self.notes],
        }


class RpgGraph:
    """Node set shared by a feature forest and a dependency edge list.

    Mutations go through the methods here; each one bumps ``version``.
    """

    def __init__(self) -> None:
        self.nodes: dict[str, RpgNode] = {}
        self.children: dict[str, list[str]] = {}
        self.parents: dict[str, list[str]] = {}
        self.dep_edges: set[GraphDepEdge] = set()
        self.version = 0

    # -- structure ----------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RpgGraph):
            return NotImplemented
        return (
            self.version == other.version
            and self.nodes == other.nodes
            and self.feature_edge_set() == other.feature_edge_set()
            and self.dep_edges == other.dep_edges
        )

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def feature_edge_set(self) -> set[tuple[str, str]]:
        return {(p, c) for p, cs in self.children.items() for c in cs}

    def parent(self, node_id: str) -> str | None:
        ps = self.parents.get(node_id, [])
        return ps[0] if ps else None

    def child_ids(self, node_id: str) -> list[str]:
        return list(self.children.get(node_id, []))

    def roots(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.level == "area")

    def ancestors(self, node_id: str) -> list[str]:
        """Parent chain, nearest first."""
        out = []
        seen = {node_id}
        cur = self.parent(node_id)
        while cur is not None and cur not in seen:
            out.append(cur)
            seen.add(cur)
            cur = self.parent(cur)
        return out

    def descendants(self, node_id: str) -> list[str]:
        out = []
        stack = list(reversed(self.child_ids(node_id)))
        seen = {node_id}
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            out.append(cur)
            stack.extend(reversed(self.child_ids(cur)))
        return out

    def leaves_under(self, node_id: str) -> list[str]:
        return [d for d in self.descendants(node_id) if self.nodes[d].kind == "low"]

    def high_chain(self, node_id: str) -> list[str]:
        """High-level ancestors ordered root first."""
        return [a for a in reversed(self.ancestors(node_id)) if self.nodes[a].kind == "high"]

    def feature_path(self, node_id: str) -> str:
        node = self.nodes[node_id]
        chain = self.high_chain(node_id)
        if node.kind == "high":
            chain = chain + [node_id]
        return "/".join(self.nodes[i].name or "" for i in chain)

    def high_by_path(self) -> dict[str, str]:
        return {self.feature_path(n.id): n.id for n in self.nodes.values() if n.kind == "high"}

    def low_by_ref(self) -> dict[str, str]:
        return {n.code_ref: n.id for n in self.nodes.values() if n.kind == "low"}

    def file_node(self, node_id: str) -> str | None:
        node = self.nodes[node_id]
        if node.kind != "low":
            return None
        if node.level == "file":
            return node_id
        for anc in self.ancestors(node_id):
            if self.nodes[anc].level == "file":
                return anc
        return None

    # -- mutation -----------------------------------------------------------

    def add_node(self, node: RpgNode, parent: str | None = None) -> "RpgGraph":
        if node.id in self.nodes:
            raise GraphError(f"duplicate node id {node.id}")
        if node.kind == "high" and node.level not in HIGH_LEVELS:
            raise GraphError(f"high node {node.id} has low level {node.level!r}")
        if node.kind == "low" and node.level not in LOW_LEVELS:
            raise GraphError(f"low node {node.id} has high level {node.level!r}")
        if parent is None:
            if node.level != "area":
                raise GraphError(f"illegal level pair: {node.level!r} requires a parent")
        else:
            if parent not in self.nodes:
                raise GraphError(f"unknown parent {parent}")
            plevel = self.nodes[parent].level
            if node.level not in CHILD_LEVELS.get(plevel, ()):
                raise GraphError(f"illegal level pair: {plevel!r} -> {node.level!r}")
        self.nodes[node.id] = node
        self.children.setdefault(node.id, [])
        self.parents.setdefault(node.id, [])
        if parent is not None:
            self._link(parent, node.id)
        self.version += 1
        return self

    def _link(self, parent: str, child: str) -> None:
        self.children.setdefault(parent, []).append(child)
        self.parents.setdefault(child, []).append(parent)

    def _unlink(self, parent: str, child: str) -> None:
        if child in self.children.get(parent, []):
            self.children[parent].remove(child)
        if parent in self.parents.get(child, []):
            self.parents[child].remove(parent)

    def add_detached(self, node: RpgNode, parent: str | None = None) -> None:
        """Insert without level checks; used while a hierarchy is still being assembled."""
        if node.id in self.nodes:
            raise GraphError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self.children.setdefault(node.id, [])
        self.parents.setdefault(node.id, [])
        if parent is not None:
            self._link(parent, node.id)
        self.version += 1

    def add_feature_edge(self, parent: str, child: str) -> None:
        """Raw edge insertion without level checks (used by deserialize)."""
        self._link(parent, child)
        self.version += 1

    def remove_subtree(self, node_id: str) -> list[str]:
        """Remove a node, its feature descendants and every incident edge."""
        if node_id not in self.nodes:
            return []
        doomed = [node_id] + self.descendants(node_id)
        gone = set(doomed)
        for p in list(self.parents.get(node_id, [])):
            self._unlink(p, node_id)
        for nid in doomed:
            self.nodes.pop(nid, None)
            self.children.pop(nid, None)
            self.parents.pop(nid, None)
        self.dep_edges = {e for e in self.dep_edges if e.src not in gone and e.dst not in gone}
        self.version += 1
        return doomed

    def detach(self, node_id: str) -> str | None:
        """Unlink a node from its feature parent; returns the former parent."""
        parent = self.parent(node_id)
        for p in list(self.parents.get(node_id, [])):
            self._unlink(p, node_id)
        self.version += 1
        return parent

    def move(self, node_id: str, new_parent: str) -> None:
        node = self.nodes[node_id]
        plevel = self.nodes[new_parent].level
        if node.level not in CHILD_LEVELS.get(plevel, ()):
            raise GraphError(f"illegal level pair: {plevel!r} -> {node.level!r}")
        for p in list(self.parents.get(node_id, [])):
            self._unlink(p, node_id)
        self._link(new_parent, node_id)
        self.version += 1

    def set_feature(self, node_id: str, phrases: list[str]) -> None:
        self.nodes[node_id].feature = list(phrases)
        self.version += 1

    def set_dep_edges(self, edges: set[GraphDepEdge]) -> None:
        if edges != self.dep_edges:
            self.dep_edges = set(edges)
            self.version += 1


def add_node(g: RpgGraph, n: RpgNode, parent: str | None = None) -> RpgGraph:
    return g.add_node(n, parent)


def subgraph_view(g: RpgGraph, view: str) -> Iterator[tuple[str, str, str]]:
    """Yield ``(src, dst, kind)`` for one view; feature edges use kind ``"feature"``."""
    if view == "feature":
        for parent in sorted(g.children):
            for child in sorted(g.children[parent]):
                yield (parent, child, "feature")
    elif view == "dependency":
        for e in sorted(g.dep_edges):
            yield (e.src, e.dst, e.kind)
    else:
        raise ValueError(f"unknown view {view!r}")


# --------------------------------------------------------------------------
# validation


def _normalized(phrase: str) -> bool:
    from rpgkit.semantic import normalize_feature

    try:
        return normalize_feature(phrase) == phrase
    except ValueError:
        return False


def validate(g: RpgGraph, check_grounding: bool = True) -> ValidationReport:
    report = ValidationReport()
    add = report.findings.append

    for parent, kids in g.children.items():
        if parent not in g.nodes:
            add(Finding("missing node", [parent], "feature edge from unknown node"))
        for kid in kids:
            if kid not in g.nodes:
                add(Finding("missing node", [kid], "feature edge to unknown node"))

    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        ps = [p for p in g.parents.get(nid, []) if p in g.nodes]
        if len(ps) > 1:
            add(Finding("forest violated", [nid] + ps, f"node has {len(ps)} feature parents"))
        if node.level == "area":
            if ps:
                add(Finding("area has parent", [nid], "area nodes must be forest roots"))
        elif not ps:
            add(Finding("orphan", [nid], f"{node.level} node without feature parent"))
        else:
            plevel = g.nodes[ps[0]].level
            if node.level not in CHILD_LEVELS.get(plevel, ()):
                add(Finding("illegal level pair", [ps[0], nid], f"{plevel} -> {node.level}"))
        if node.kind == "high":
            if node.level not in HIGH_LEVELS:
                add(Finding("bad level", [nid], f"high node with level {node.level}"))
        elif node.kind == "low":
            if node.level not in LOW_LEVELS:
                add(Finding("bad level", [nid], f"low node with level {node.level}"))
            if node.path is None or node.entity_kind is None:
                add(Finding("missing metadata", [nid], "low node lacks path or entity kind"))
            if node.grounded_scopes is not None:
                add(Finding("misplaced scopes", [nid], "low nodes do not carry grounded scopes"))
        else:
            add(Finding("bad kind", [nid], f"unknown node kind {node.kind!r}"))
        bad = [p for p in node.feature if not _normalized(p)]
        if bad:
            add(Finding("unnormalized feature", [nid], f"phrases not normalized: {bad}"))
        if len(set(node.feature)) != len(node.feature):
            add(Finding("duplicate feature", [nid], "feature phrases repeat"))

    # cycles in the feature forest
    for nid in sorted(g.nodes):
        seen = {nid}
        cur = g.parent(nid)
        while cur is not None:
            if cur in seen:
                add(Finding("cycle", [nid], "feature edges form a cycle"))
                break
            seen.add(cur)
            cur = g.parent(cur)

    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if node.level == "file":
            chain = [g.nodes[a].level for a in g.high_chain(nid)]
            if chain != list(HIGH_LEVELS):
                add(Finding("abstract depth", [nid], f"high ancestors {chain} are not area/category/subcategory"))
        if node.kind == "high":
            if not g.leaves_under(nid):
                if node.level == "area":
                    report.notes.append(Finding("empty area root", [nid], "area retained without leaves"))
                else:
                    add(Finding("empty abstract node", [nid], f"{node.level} has no low-level leaves"))

    for e in sorted(g.dep_edges):
        if e.kind not in DEP_KINDS:
            add(Finding("bad dependency kind", [e.src, e.dst], e.kind))
        for end in (e.src, e.dst):
            if end not in g.nodes:
                add(Finding("missing node", [end], "dependency edge endpoint unknown"))
            elif g.nodes[end].kind != "low":
                add(Finding("dependency on high node", [end], "dependency edges join low-level nodes only"))
        if e.kind != "invokes" and e.src == e.dst:
            add(Finding("self edge", [e.src], f"{e.kind} self edge"))

    if check_grounding:
        for nid in sorted(g.nodes):
            node = g.nodes[nid]
            if node.kind != "high" or node.grounded_scopes is None:
                continue
            for f in grounding_findings(g, nid):
                add(f)
    return report


def coverage(g: RpgGraph, node_id: str) -> set[str]:
    return {dir_of(g.nodes[l].path or "") for l in g.leaves_under(node_id)}


def grounding_findings(g: RpgGraph, node_id: str) -> list[Finding]:
    scopes = g.nodes[node_id].grounded_scopes or []
    out = []
    for a in scopes:
        for b in scopes:
            if a != b and is_path_prefix(a, b):
                out.append(Finding("scope antichain", [node_id], f"{a!r} is a prefix of {b!r}"))
    for d in sorted(coverage(g, node_id)):
        if not any(is_path_prefix(s, d) for s in scopes):
            out.append(Finding("scope coverage", [node_id], f"directory {d!r} not covered"))
    return out


# --------------------------------------------------------------------------
# serialization

_META_KEYS = {"name", "path", "qualified_name", "span", "entity_kind", "grounded_scopes"}


def to_document(g: RpgGraph) -> dict:
    return {
        "version": g.version,
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "level": n.level,
                "feature": list(n.feature),
                "metadata": n.metadata(),
            }
            for n in sorted(g.nodes.values(), key=lambda n: n.id)
        ],
        "feature_edges": [list(e) for e in sorted(g.feature_edge_set())],
        "dep_edges": [{"src": e.src, "dst": e.dst, "kind": e.kind} for e in sorted(g.dep_edges)],
    }


def serialize(g: RpgGraph) -> bytes:
    return (json.dumps(to_document(g), sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def _require(obj: dict, key: str, typ: type | tuple, where: str):
    if key not in obj:
        raise RpgFormatError(f"missing {key!r}", where)
    value = obj[key]
    if not isinstance(value, typ) or isinstance(value, bool) and typ is int:
        raise RpgFormatError(f"{key!r} has wrong type {type(value).__name__}", where)
    return value


def from_document(doc: object) -> RpgGraph:
    if not isinstance(doc, dict):
        raise RpgFormatError("document must be an object", "$")
    extra = set(doc) - {"version", "nodes", "feature_edges", "dep_edges"}
    if extra:
        raise RpgFormatError(f"unknown top-level keys {sorted(extra)}", "$")
    g = RpgGraph()
    version = _require(doc, "version", int, "$")
    for i, raw in enumerate(_require(doc, "nodes", list, "$")):
        where = f"nodes[{i}]"
        if not isinstance(raw, dict):
            raise RpgFormatError("node must be an object", where)
        nid = _require(raw, "id", str, where)
        where = f"nodes[{i}] (id={nid})"
        kind = _require(raw, "kind", str, where)
        level = _require(raw, "level", str, where)
        feature = _require(raw, "feature", list, where)
        if not all(isinstance(p, str) for p in feature):
            raise RpgFormatError("feature entries must be strings", where)
        meta = raw.get("metadata", {})
        if not isinstance(meta, dict):
            raise RpgFormatError("metadata must be an object", where)
        unknown = set(meta) - _META_KEYS
        if unknown:
            raise RpgFormatError(f"unknown metadata keys {sorted(unknown)}", where)
        span = meta.get("span")
        if span is not None:
            if not (isinstance(span, list) and len(span) == 2 and all(isinstance(x, int) for x in span)):
                raise RpgFormatError("span must be [start, end]", where)
            span = (span[0], span[1])
        if nid in g.nodes:
            raise RpgFormatError("duplicate node id", where)
        scopes = meta.get("grounded_scopes")
        g.nodes[nid] = RpgNode(
            id=nid,
            kind=kind,
            level=level,
            feature=list(feature),
            name=meta.get("name"),
            path=meta.get("path"),
            qualified_name=meta.get("qualified_name"),
            span=span,
            entity_kind=meta.get("entity_kind"),
            grounded_scopes=list(scopes) if scopes is not None else None,
        )
        g.children.setdefault(nid, [])
        g.parents.setdefault(nid, [])
    for i, pair in enumerate(_require(doc, "feature_edges", list, "$")):
        where = f"feature_edges[{i}]"
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
            raise RpgFormatError("feature edge must be [parent_id, child_id]", where)
        for end in pair:
            if end not in g.nodes:
                raise RpgFormatError(f"unknown node id {end!r}", where)
        g._link(pair[0], pair[1])
    for i, raw in enumerate(_require(doc, "dep_edges", list, "$")):
        where = f"dep_edges[{i}]"
        if not isinstance(raw, dict):
            raise RpgFormatError("dependency edge must be an object", where)
        src = _require(raw, "src", str, where)
        dst = _require(raw, "dst", str, where)
        kind = _require(raw, "kind", str, where)
        if kind not in DEP_KINDS:
            raise RpgFormatError(f"unknown dependency kind {kind!r}", where)
        for end in (src, dst):
            if end not in g.nodes:
                raise RpgFormatError(f"unknown node id {end!r}", where)
        g.dep_edges.add(GraphDepEdge(src, dst, kind))
    # children lists are kept in sorted order for canonical traversal
    for kids in g.children.values():
        kids.sort()
    g.version = version
    return g


def deserialize(data: bytes | str) -> RpgGraph:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise RpgFormatError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return from_document(doc)


def load(path) -> RpgGraph:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def save(g: RpgGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(g))
