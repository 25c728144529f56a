"""Build a graph from a source tree.

Entities get feature phrases first; files are then grouped into an abstract
hierarchy whose nodes are anchored to the directories they cover.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from rpgkit import prompts
from rpgkit._paths import dir_of, normalize_dir
from rpgkit.codeindex import CODE_KINDS, EntityRef, EntitySet, extract_dependencies, scan_repository
from rpgkit.config import Config, make_provider
from rpgkit.graph import GraphDepEdge, RpgGraph, RpgNode, high_node_id, low_node_id, validate
from rpgkit.semantic import (
    GroupSummary,
    SemanticProvider,
    StageUsage,
    estimate_tokens,
    normalize_phrases,
    pascal_case,
    split_identifier,
    top_phrases,
)

ROOT_LABEL = "RepositoryRoot"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, diagnostics: list | None = None) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.diagnostics = diagnostics or []


# --------------------------------------------------------------------------
# grounding


def compute_lca(paths: set[str] | list[str], min_scope_depth: int = 1) -> set[str]:
    """Minimal covering antichain of directory scopes.

    Walk a segment trie from the root through single-child chains; the first
    node that is an input or branches becomes a scope. Branching nodes above
    ``min_scope_depth`` are split into their children instead; inputs are
    always kept so they stay covered.
    """
    trie: dict = {}
    terminal = "\0end"
    for raw in paths:
        node = trie
        norm = normalize_dir(raw)
        for seg in norm.split("/") if norm else []:
            node = node.setdefault(seg, {})
        node[terminal] = True

    scopes: set[str] = set()
    if not trie:
        return scopes
    stack: list[tuple[dict, list[str]]] = [(trie, [])]
    while stack:
        node, segs = stack.pop()
        kids = [k for k in node if k != terminal]
        if terminal in node or (len(kids) >= 2 and len(segs) >= min_scope_depth):
            scopes.add("/".join(segs))
            continue
        for k in kids:
            stack.append((node[k], segs + [k]))
    return scopes


def coverage_sets(g: RpgGraph) -> dict[str, set[str]]:
    """Directory coverage per node, aggregated bottom-up from file paths."""
    cov: dict[str, set[str]] = {}

    def visit(nid: str) -> set[str]:
        node = g.nodes[nid]
        if node.kind == "low":
            out = {dir_of(node.path or "")}
        else:
            out = set()
            for child in g.child_ids(nid):
                out |= visit(child)
        cov[nid] = out
        return out

    for nid in sorted(g.nodes):
        if g.parent(nid) is None:
            visit(nid)
    return cov


def ground(g: RpgGraph, min_scope_depth: int = 1) -> None:
    """Assign grounded scopes to every high node from its coverage set."""
    cov = coverage_sets(g)
    for nid, node in g.nodes.items():
        if node.kind == "high":
            scopes = sorted(compute_lca(cov.get(nid, set()), min_scope_depth))
            if node.grounded_scopes != scopes:
                node.grounded_scopes = scopes
                g.version += 1


def dep_edges_for(es: EntitySet, g: RpgGraph, files: list[str] | None = None) -> set[GraphDepEdge]:
    out = set()
    for e in extract_dependencies(es, files):
        if e.kind == "contains":
            continue
        src = low_node_id(e.src.path, e.src.qualified_name, e.src.kind)
        dst = low_node_id(e.dst.path, e.dst.qualified_name, e.dst.kind)
        if src in g.nodes and dst in g.nodes:
            out.add(GraphDepEdge(src, dst, e.kind))
    return out


def phase3_ground(g: RpgGraph, es: EntitySet, min_scope_depth: int = 1) -> RpgGraph:
    ground(g, min_scope_depth)
    g.set_dep_edges(dep_edges_for(es, g))
    return g


# --------------------------------------------------------------------------
# phase 1


def low_node(ref: EntityRef, feature: list[str]) -> RpgNode:
    return RpgNode(
        id=low_node_id(ref.path, ref.qualified_name, ref.kind),
        kind="low",
        level=ref.kind,
        feature=list(feature),
        path=ref.path,
        qualified_name=ref.qualified_name,
        span=ref.span,
        entity_kind=ref.kind,
    )


def parse_items(es: EntitySet, refs: list[EntityRef], provider: SemanticProvider) -> list[tuple[EntityRef, str]]:
    """Source for each entity, excluding nested definitions; oversized text is truncated."""
    cap = provider.item_capacity()
    items = []
    for ref in refs:
        src = es.own_source(ref)
        item = prompts.parse_item(str(ref), src)
        if estimate_tokens(item) > cap:
            keep = max(0, cap * 4 - (len(item) - len(src)) - 4)
            src = src[:keep]
            provider.diagnostics.append({"stage": "phase1", "entity": str(ref), "issue": "source truncated to fit budget"})
        items.append((ref, src))
    return items


def summarize(g: RpgGraph, file_id: str, provider: SemanticProvider) -> list[str]:
    node = g.nodes[file_id]
    child_phrases = [g.nodes[d].feature for d in g.descendants(file_id)]
    return provider.summarize_file(node.path or "", child_phrases)


def phase1_lift(es: EntitySet, provider: SemanticProvider) -> RpgGraph:
    g = RpgGraph()
    code = [e for e in es.entities if e.kind in CODE_KINDS]
    with provider.stage("phase1"):
        features = provider.parse_many(parse_items(es, code, provider))
        for ref in es.entities:
            node = low_node(ref, features.get(ref, []))
            parent = es.parent_of(ref) if ref.kind != "file" else None
            g.add_detached(node, low_node_id(parent.path, parent.qualified_name, parent.kind) if parent else None)
        for path in es.files:
            fid = low_node_id(path, None, "file")
            g.nodes[fid].feature = summarize(g, fid, provider)
    return g


# --------------------------------------------------------------------------
# phase 2


def group_files(paths: list[str]) -> dict[str, tuple[str, str]]:
    """Map each file to ``(group id, area label)``.

    Directories shared by every file are stripped first, so a repository whose
    code lives under one package still splits by that package's subdirectories.
    Files directly in the shared directory form one group of their own.
    """
    if not paths:
        return {}
    dirs = [dir_of(p).split("/") if dir_of(p) else [] for p in paths]
    common: list[str] = []
    for segs in zip(*dirs):
        if len(set(segs)) != 1:
            break
        common.append(segs[0])
    base = "/".join(common)
    out = {}
    for path, segs in zip(paths, dirs):
        if len(segs) == len(common):
            gid = base or "_root"
            label = pascal_case(common[-1]) if common else ROOT_LABEL
        else:
            nxt = segs[len(common)]
            gid = f"{base}/{nxt}" if base else nxt
            label = pascal_case(nxt)
        out[path] = (gid, label or ROOT_LABEL)
    return out


def group_summaries(g: RpgGraph) -> list[GroupSummary]:
    files = sorted((n.path or "", n.id) for n in g.nodes.values() if n.level == "file")
    grouping = group_files([p for p, _ in files])
    members: dict[str, list[str]] = {}
    labels: dict[str, str] = {}
    for path, _ in files:
        gid, label = grouping[path]
        members.setdefault(gid, []).append(path)
        labels[gid] = label
    by_path = {p: nid for p, nid in files}
    out = []
    for gid in sorted(members):
        phrases = top_phrases(g.nodes[by_path[p]].feature for p in members[gid])
        if not phrases:
            phrases = normalize_phrases([" ".join(split_identifier(labels[gid]))]) or ["repository root"]
        out.append(GroupSummary(gid, members[gid], phrases, labels[gid]))
    return out


def ensure_chain(g: RpgGraph, feature_path: str) -> str:
    """Create missing area/category/subcategory nodes; return the subcategory id."""
    parts = feature_path.split("/")
    if len(parts) != 3 or not all(parts):
        raise ValueError(f"feature path must have three segments: {feature_path!r}")
    parent = None
    for depth, level in enumerate(("area", "category", "subcategory")):
        fp = "/".join(parts[: depth + 1])
        nid = high_node_id(fp)
        if nid not in g.nodes:
            g.add_node(RpgNode(id=nid, kind="high", level=level, name=parts[depth]), parent)
        parent = nid
    assert parent is not None
    return parent


def refresh_high_features(g: RpgGraph) -> None:
    """High-node phrases: the node's own name, then its files' most common phrases."""
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if node.kind != "high":
            continue
        files = [g.nodes[d].feature for d in g.descendants(nid) if g.nodes[d].level == "file"]
        own = normalize_phrases([" ".join(split_identifier(node.name or ""))])
        phrases = list(dict.fromkeys(own + top_phrases(files)))[:8]
        if node.feature != phrases:
            g.set_feature(nid, phrases)


def phase2_reorganize(g: RpgGraph, provider: SemanticProvider) -> RpgGraph:
    files = sorted((n.path or "", n.id) for n in g.nodes.values() if n.level == "file")
    if not files:
        return g
    with provider.stage("phase2"):
        areas = provider.discover_domains([(p, list(g.nodes[nid].feature)) for p, nid in files])
        groups = group_summaries(g)
        assignment = provider.assign_paths(groups, areas)
    by_group = {grp.group_id: grp for grp in groups}
    by_path = dict(files)
    for fpath in sorted(assignment):
        sub = ensure_chain(g, fpath)
        for gid in assignment[fpath]:
            for member in by_group[gid].members:
                g.move(by_path[member], sub)
    refresh_high_features(g)
    return g


# --------------------------------------------------------------------------
# end to end


@dataclass
class BuildResult:
    graph: RpgGraph
    entities: EntitySet
    usage: dict[str, StageUsage] = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)

    def write_diagnostics(self, path: str | os.PathLike) -> None:
        import json

        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entities.diagnostics + self.diagnostics:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def build_from_entities(es: EntitySet, provider: SemanticProvider, min_scope_depth: int = 1) -> RpgGraph:
    try:
        g = phase1_lift(es, provider)
    except Exception as exc:
        raise PipelineError("phase1", str(exc), provider.diagnostics) from exc
    try:
        phase2_reorganize(g, provider)
    except Exception as exc:
        raise PipelineError("phase2", str(exc), provider.diagnostics) from exc
    phase3_ground(g, es, min_scope_depth)
    report = validate(g)
    if not report.ok:
        raise PipelineError("validate", "; ".join(f"{f.code}: {f.message}" for f in report.findings))
    return g


def build_with_report(root: str | os.PathLike, config: Config | None = None, provider: SemanticProvider | None = None) -> BuildResult:
    cfg = config or Config()
    provider = provider or make_provider(cfg)
    try:
        es = scan_repository(Path(root), cfg.include_globs, cfg.exclude_globs)
    except Exception as exc:
        raise PipelineError("scan", str(exc)) from exc
    g = build_from_entities(es, provider, cfg.extractor_min_scope_depth)
    return BuildResult(g, es, provider.account.snapshot(), list(provider.diagnostics))


def build(root: str | os.PathLike, config: Config | None = None, provider: SemanticProvider | None = None) -> RpgGraph:
    return build_with_report(root, config, provider).graph
