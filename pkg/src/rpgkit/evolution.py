"""Incremental maintenance: turn a commit diff into graph edits.

Deletes run first, then modifications, then inserts. Modified entities whose
features drift past ``tau`` are re-placed; new files are routed down the
abstract hierarchy. A commit is applied to a copy and only returned when the
result validates.
"""

from __future__ import annotations

import copy
import re
from collections import Counter
from dataclasses import dataclass, field

from rpgkit.codeindex import CODE_KINDS, EntityRef, EntitySet, entity_at, module_name, referenced_modules
from rpgkit.extractor import dep_edges_for, ensure_chain, ground, low_node, refresh_high_features, summarize
from rpgkit.graph import GraphDepEdge, RpgGraph, low_node_id, validate
from rpgkit.semantic import SemanticProvider, StageUsage, normalize_phrases, split_identifier, usage_delta

EVENT_KINDS = ("delete", "modify", "insert")
FALLBACK_PATH = "Unclassified/general/general"

_HUNK = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


class DiffError(ValueError):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"diff line {line}: {message}")
        self.line = line


class UpdateError(RuntimeError):
    def __init__(self, stage: str, message: str, report: "UpdateReport | None" = None) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.report = report


@dataclass(frozen=True)
class ChangeEvent:
    kind: str
    entity: EntityRef
    new_source: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "delete" and self.new_source is not None:
            raise ValueError("delete events carry no source")


@dataclass
class UpdateReport:
    applied: Counter = field(default_factory=Counter)
    pruned: list[str] = field(default_factory=list)
    rerouted: list[str] = field(default_factory=list)
    usage: dict[str, StageUsage] = field(default_factory=dict)
    dep_added: list[GraphDepEdge] = field(default_factory=list)
    dep_removed: list[GraphDepEdge] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    version_before: int = 0
    version_after: int = 0

    @property
    def prompt_tokens(self) -> int:
        return sum(u.prompt_tokens_est for u in self.usage.values())

    def as_dict(self) -> dict:
        return {
            "applied": {k: self.applied.get(k, 0) for k in EVENT_KINDS},
            "pruned": self.pruned,
            "rerouted": self.rerouted,
            "usage": {k: v.as_dict() for k, v in sorted(self.usage.items())},
            "dep_edges_added": len(self.dep_added),
            "dep_edges_removed": len(self.dep_removed),
            "skipped": self.skipped,
            "diagnostics": self.diagnostics,
            "version_before": self.version_before,
            "version_after": self.version_after,
        }


# --------------------------------------------------------------------------
# diff parsing


@dataclass
class FileDiff:
    old_path: str | None
    new_path: str | None
    old_lines: set[int] = field(default_factory=set)
    new_lines: set[int] = field(default_factory=set)


def _strip(path: str, strip: int) -> str | None:
    path = path.split("\t", 1)[0].strip()
    if path == "/dev/null":
        return None
    parts = path.split("/")
    return "/".join(parts[strip:]) if len(parts) > strip else parts[-1]


def parse_unified_diff(text: str, strip: int = 1) -> list[FileDiff]:
    """Touched line numbers per file: removed lines (old side) and added lines (new side)."""
    lines = text.splitlines()
    out: list[FileDiff] = []
    cur: FileDiff | None = None
    # a "diff --git" line opens a section whose ---/+++ header is still pending
    pending = False
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("diff --git "):
            parts = line.split()
            cur = FileDiff(_strip(parts[2], strip), _strip(parts[3], strip)) if len(parts) >= 4 else FileDiff(None, None)
            out.append(cur)
            pending = True
        elif pending and cur is not None and line.startswith("rename from "):
            cur.old_path = line[len("rename from ") :].strip()
        elif pending and cur is not None and line.startswith("rename to "):
            cur.new_path = line[len("rename to ") :].strip()
        elif pending and cur is not None and line.startswith("new file mode"):
            cur.old_path = None
        elif pending and cur is not None and line.startswith("deleted file mode"):
            cur.new_path = None
        elif line.startswith("--- "):
            if i + 1 >= len(lines) or not lines[i + 1].startswith("+++ "):
                raise DiffError("'---' header without '+++'", i + 1)
            old, new = _strip(line[4:], strip), _strip(lines[i + 1][4:], strip)
            if pending and cur is not None:
                cur.old_path, cur.new_path = old, new
            else:
                cur = FileDiff(old, new)
                out.append(cur)
            pending = False
            i += 2
            continue
        elif line.startswith("@@"):
            m = _HUNK.match(line)
            if m is None or cur is None:
                raise DiffError("malformed hunk header" if m is None else "hunk outside a file section", i + 1)
            pending = False
            old_no, new_no = int(m.group(1)), int(m.group(3))
            old_left = int(m.group(2)) if m.group(2) is not None else 1
            new_left = int(m.group(4)) if m.group(4) is not None else 1
            i += 1
            while old_left > 0 or new_left > 0:
                if i >= len(lines):
                    raise DiffError("hunk ends early", i)
                body = lines[i]
                tag = body[:1]
                if tag == "\\":
                    i += 1
                    continue
                if tag in (" ", ""):
                    if old_left <= 0 or new_left <= 0:
                        raise DiffError("hunk line counts do not match its header", i + 1)
                    old_no, new_no, old_left, new_left = old_no + 1, new_no + 1, old_left - 1, new_left - 1
                elif tag == "-":
                    if old_left <= 0:
                        raise DiffError("more removed lines than the header declares", i + 1)
                    cur.old_lines.add(old_no)
                    old_no, old_left = old_no + 1, old_left - 1
                elif tag == "+":
                    if new_left <= 0:
                        raise DiffError("more added lines than the header declares", i + 1)
                    cur.new_lines.add(new_no)
                    new_no, new_left = new_no + 1, new_left - 1
                else:
                    raise DiffError(f"unexpected hunk line {body[:20]!r}", i + 1)
                i += 1
            while i < len(lines) and lines[i].startswith("\\"):
                i += 1
            continue
        i += 1
    return out


def _depth_key(ref: EntityRef) -> tuple:
    return (ref.kind != "file", ref.path, (ref.qualified_name or "").count("."), ref.span[0], ref.qualified_name or "")


def parse_diff(diff_text: str, before: EntitySet, after: EntitySet, strip: int = 1) -> list[ChangeEvent]:
    events: dict[tuple, ChangeEvent] = {}

    def emit(kind: str, ref: EntityRef) -> None:
        src = None
        if kind != "delete":
            src = after.source_text.get(ref.path, "") if ref.kind == "file" else after.own_source(ref)
        events.setdefault((kind, ref.key), ChangeEvent(kind, ref, src))

    for fd in parse_unified_diff(diff_text, strip):
        old, new = fd.old_path, fd.new_path
        if old is not None and old != new:
            for ref in before.in_file(old):
                emit("delete", ref)
        if new is not None and old != new:
            for ref in after.in_file(new):
                emit("insert", ref)
        if old is None or new is None or old != new:
            continue
        path = old
        touched: set[tuple] = set()
        for ln in sorted(fd.old_lines):
            ref = entity_at(before, path, ln)
            if ref is not None:
                touched.add(ref.key)
        for ln in sorted(fd.new_lines):
            ref = entity_at(after, path, ln)
            if ref is not None:
                touched.add(ref.key)
        before_keys = {e.key for e in before.in_file(path)}
        after_keys = {e.key for e in after.in_file(path)}
        # definitions can appear or vanish without owning a touched line
        touched |= before_keys ^ after_keys
        for key in sorted(touched, key=lambda k: (k[0], k[1] or "", k[2])):
            if key in before_keys and key in after_keys:
                emit("modify", after.lookup(key))  # type: ignore[arg-type]
            elif key in before_keys:
                emit("delete", before.lookup(key))  # type: ignore[arg-type]
            else:
                emit("insert", after.lookup(key))  # type: ignore[arg-type]
    order = {k: i for i, k in enumerate(EVENT_KINDS)}
    return sorted(events.values(), key=lambda ev: (order[ev.kind], _depth_key(ev.entity)))


# --------------------------------------------------------------------------
# graph edits


def _node_id(ref: EntityRef) -> str:
    return low_node_id(ref.path, ref.qualified_name, ref.kind)


def prune_upward(g: RpgGraph, start: str | None) -> list[str]:
    """Remove leafless high ancestors from ``start`` upward; area roots stay."""
    pruned = []
    cur = start
    while cur is not None and cur in g.nodes:
        node = g.nodes[cur]
        if node.kind != "high" or node.level == "area" or g.leaves_under(cur):
            break
        parent = g.parent(cur)
        g.remove_subtree(cur)
        pruned.append(cur)
        cur = parent
    return pruned


def delete_node(g: RpgGraph, node_id: str, pruned: list[str] | None = None) -> RpgGraph:
    if node_id not in g.nodes:
        return g
    parent = g.parent(node_id)
    g.remove_subtree(node_id)
    gone = prune_upward(g, parent)
    if pruned is not None:
        pruned.extend(gone)
    return g


def routing_target(path: str, summary: list[str]) -> list[str]:
    """File phrases plus its directory name, so empty files still route by location."""
    parts = path.split("/")
    folder = parts[-2] if len(parts) > 1 else ""
    return normalize_phrases(list(summary) + [" ".join(split_identifier(folder))])


def find_best_parent(g: RpgGraph, target: list[str], provider: SemanticProvider, diagnostics: list[dict] | None = None) -> str:
    """Route down from the areas to a subcategory, creating levels the walk stops short of."""
    areas = [(a, g.nodes[a].feature) for a in g.roots()]
    choice = provider.route(areas, target) if areas else None
    if choice is None:
        if diagnostics is not None:
            diagnostics.append({"issue": "no area fits; using fallback", "target": target})
        return ensure_chain(g, FALLBACK_PATH)
    cur = choice
    while g.nodes[cur].level != "subcategory":
        kids = [(c, g.nodes[c].feature) for c in sorted(g.child_ids(cur)) if g.nodes[c].kind == "high"]
        if not kids:
            break
        pick = provider.route(kids, target)
        if pick is None:
            break
        cur = pick
    level = g.nodes[cur].level
    if level == "subcategory":
        return cur
    names = (list(target) + ["general", "general"])[:2]
    tail = names if level == "area" else names[:1]
    return ensure_chain(g, "/".join([g.feature_path(cur)] + tail))


def reroute_file(g: RpgGraph, file_id: str, provider: SemanticProvider, report: UpdateReport) -> None:
    """Move a file and everything under it to the parent routing picks now."""
    old_parent = g.detach(file_id)
    report.pruned.extend(prune_upward(g, old_parent))
    node = g.nodes[file_id]
    sub = find_best_parent(g, routing_target(node.path or "", node.feature), provider, report.diagnostics)
    g.move(file_id, sub)
    report.rerouted.append(file_id)


def _parse(provider: SemanticProvider, after: EntitySet, refs: list[EntityRef]) -> dict[EntityRef, list[str]]:
    return provider.parse_many([(r, after.own_source(r)) for r in refs]) if refs else {}


def settle_file(g: RpgGraph, file_id: str, provider: SemanticProvider, tau: float, report: UpdateReport) -> None:
    """Re-synthesize a file summary; a drifted file is routed again."""
    old = list(g.nodes[file_id].feature)
    new = summarize(g, file_id, provider)
    if new == old:
        return
    drift = provider.judge_drift(old, new)
    g.set_feature(file_id, new)
    if drift > tau:
        reroute_file(g, file_id, provider, report)


def process_modification(
    g: RpgGraph,
    f: str,
    events: list[ChangeEvent],
    provider: SemanticProvider,
    after: EntitySet,
    tau: float = 0.5,
    report: UpdateReport | None = None,
    features: dict[EntityRef, list[str]] | None = None,
    resummarize: bool = True,
) -> RpgGraph:
    report = report if report is not None else UpdateReport()
    mods = [ev for ev in events if ev.kind == "modify" and ev.entity.path == f]
    code = [ev.entity for ev in mods if ev.entity.kind in CODE_KINDS and _node_id(ev.entity) in g.nodes]
    if features is None:
        try:
            features = _parse(provider, after, code)
        except Exception as exc:
            report.skipped.extend({"entity": str(r), "reason": str(exc)} for r in code)
            return g
    for ev in mods:
        nid = _node_id(ev.entity)
        if nid not in g.nodes:
            report.skipped.append({"entity": str(ev.entity), "reason": "not in graph"})
            continue
        report.applied["modify"] += 1
        node = g.nodes[nid]
        node.span = ev.entity.span
        if ev.entity.kind not in CODE_KINDS:
            continue
        new = features.get(ev.entity)
        if new is None:
            report.skipped.append({"entity": str(ev.entity), "reason": "no features"})
            continue
        drift = provider.judge_drift(list(node.feature), new)
        g.set_feature(nid, new)
        if drift > tau:
            # definitions are placed by syntax: re-attach under the enclosing entity
            parent_ref = after.parent_of(ev.entity)
            target = _node_id(parent_ref) if parent_ref is not None else None
            if target is not None and target in g.nodes and g.parent(nid) != target:
                g.move(nid, target)
            report.rerouted.append(nid)
    fid = low_node_id(f, None, "file")
    if resummarize and fid in g.nodes:
        settle_file(g, fid, provider, tau, report)
    return g


def insert_node(
    g: RpgGraph,
    event: ChangeEvent,
    provider: SemanticProvider,
    after: EntitySet,
    features: dict[EntityRef, list[str]] | None = None,
    report: UpdateReport | None = None,
) -> RpgGraph:
    report = report if report is not None else UpdateReport()
    ref = event.entity
    nid = _node_id(ref)
    if nid in g.nodes:
        return g
    features = features if features is not None else {}
    if ref.kind == "file":
        children = [e for e in after.in_file(ref.path) if e.kind in CODE_KINDS]
        missing = [c for c in children if c not in features]
        features = {**features, **_parse(provider, after, missing)}
        summary = provider.summarize_file(ref.path, [features[c] for c in children])
        sub = find_best_parent(g, routing_target(ref.path, summary), provider, report.diagnostics)
        g.add_node(low_node(ref, summary), sub)
    else:
        parent_ref = after.parent_of(ref)
        pid = _node_id(parent_ref) if parent_ref is not None else None
        if pid is None or pid not in g.nodes:
            report.skipped.append({"entity": str(ref), "reason": "enclosing entity missing"})
            return g
        feats = features[ref] if ref in features else _parse(provider, after, [ref])[ref]
        g.add_node(low_node(ref, feats), pid)
    report.applied["insert"] += 1
    return g


# --------------------------------------------------------------------------
# commits


def _reverse_dependents(g: RpgGraph, after: EntitySet, changed: set[str]) -> set[str]:
    out = set()
    for e in g.dep_edges:
        src, dst = g.nodes.get(e.src), g.nodes.get(e.dst)
        if src is not None and dst is not None and dst.path in changed:
            out.add(src.path or "")
    mods = {module_name(p) for p in changed}
    for path in after.files:
        for ref in referenced_modules(after, path):
            if any(ref == m or ref.startswith(m + ".") or m.startswith(ref + ".") for m in mods):
                out.add(path)
                break
    return out


def refresh_dependencies(g: RpgGraph, after: EntitySet, changed: set[str]) -> tuple[set[str], set[GraphDepEdge]]:
    affected = (changed | _reverse_dependents(g, after, changed)) & set(after.files)
    keep = {e for e in g.dep_edges if g.nodes[e.src].path not in affected and g.nodes[e.src].path not in changed}
    fresh = keep | dep_edges_for(after, g, sorted(affected))
    g.set_dep_edges(fresh)
    return affected, fresh


def apply_commit(
    g: RpgGraph,
    diff_text: str,
    before: EntitySet,
    after: EntitySet,
    provider: SemanticProvider,
    tau: float = 0.5,
    min_scope_depth: int = 1,
    strip: int = 1,
) -> tuple[RpgGraph, UpdateReport]:
    """Apply one commit to a copy of ``g``; ``g`` itself is never modified."""
    report = UpdateReport(version_before=g.version)
    usage0 = provider.account.snapshot()
    diag0 = len(provider.diagnostics)
    try:
        events = parse_diff(diff_text, before, after, strip)
    except DiffError as exc:
        raise UpdateError("diff", str(exc), report) from exc
    work = copy.deepcopy(g)
    if not events:
        report.version_after = work.version
        return work, report
    old_edges = set(work.dep_edges)
    changed = {ev.entity.path for ev in events}

    with provider.stage("update"):
        for ev in (e for e in events if e.kind == "delete"):
            nid = _node_id(ev.entity)
            if nid in work.nodes:
                delete_node(work, nid, report.pruned)
                report.applied["delete"] += 1

        # subtree deletes can take surviving definitions with them; re-add those
        inserts = {ev.entity.key: ev for ev in events if ev.kind == "insert"}
        modifies = []
        for ev in (e for e in events if e.kind == "modify"):
            if _node_id(ev.entity) in work.nodes:
                modifies.append(ev)
            else:
                inserts.setdefault(ev.entity.key, ChangeEvent("insert", ev.entity, ev.new_source))
        for path in sorted(changed & set(after.files)):
            for ref in after.in_file(path):
                if _node_id(ref) not in work.nodes and ref.key not in inserts:
                    inserts[ref.key] = ChangeEvent("insert", ref, after.own_source(ref))
        insert_list = sorted(inserts.values(), key=lambda ev: _depth_key(ev.entity))

        code = [ev.entity for ev in modifies + insert_list if ev.entity.kind in CODE_KINDS]
        try:
            features = _parse(provider, after, code)
        except Exception as exc:
            raise UpdateError("update", f"feature parsing failed: {exc}", report) from exc

        for path in sorted({ev.entity.path for ev in modifies}):
            process_modification(work, path, modifies, provider, after, tau, report, features, resummarize=False)

        new_files = {ev.entity.path for ev in insert_list if ev.entity.kind == "file"}
        for ev in insert_list:
            insert_node(work, ev, provider, after, features, report)

        for path in sorted(changed - new_files):
            fid = low_node_id(path, None, "file")
            if fid in work.nodes:
                settle_file(work, fid, provider, tau, report)

    for path in sorted(changed & set(after.files)):
        for ref in after.in_file(path):
            node = work.nodes.get(_node_id(ref))
            if node is not None and node.span != ref.span:
                node.span = ref.span
                work.version += 1
    refresh_high_features(work)
    ground(work, min_scope_depth)
    refresh_dependencies(work, after, changed)

    report.dep_added = sorted(work.dep_edges - old_edges)
    report.dep_removed = sorted(old_edges - work.dep_edges)
    report.usage = usage_delta(usage0, provider.account.snapshot())
    report.diagnostics.extend(provider.diagnostics[diag0:])
    check = validate(work)
    if not check.ok:
        raise UpdateError("validate", "; ".join(f"{f.code} {f.node_ids}: {f.message}" for f in check.findings), report)
    report.version_after = work.version
    return work, report
