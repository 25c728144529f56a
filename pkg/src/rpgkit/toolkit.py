"""Read-only query tools over a built graph.

Requests are ``{"tool_name": ..., "parameters": {...}}``. Unknown parameters are
rejected; unknown entities inside otherwise valid requests are reported as
warnings rather than errors, so one bad candidate never hides the good ones.
"""

from __future__ import annotations

import difflib
import inspect
import json
import socketserver
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable

from rpgkit._paths import is_glob, match_glob
from rpgkit.codeindex import DEP_KINDS, ENTITY_KINDS
from rpgkit.graph import RpgGraph
from rpgkit.semantic import FeatureRejected, normalize_feature

TOOLS = ("SearchNode", "FetchNode", "ExploreRPG")
MODES = ("features", "snippets", "auto")
DIRECTIONS = ("upstream", "downstream", "both")
TOP_K = 10
PREVIEW_LINES = 40
MAX_SNIPPET_HITS = 50


class ToolError(ValueError):
    pass


@dataclass
class ToolResult:
    tool_name: str
    ok: bool
    result: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "ok": self.ok,
            "result": self.result,
            "warnings": self.warnings,
            "error": self.error,
        }


def _str_list(value: Any, name: str, warnings: list[str]) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        raise ToolError(f"{name} must be a list of strings")
    out = []
    for item in value:
        if isinstance(item, str) and item.strip():
            out.append(item.strip())
        else:
            warnings.append(f"{name}: ignored invalid entry {item!r}")
    return out


def _tokens(phrase: str) -> set[str]:
    return set(phrase.split())


def _pair_score(query: list[str], phrases: list[str]) -> float:
    best = 0.0
    for q in query:
        tq = _tokens(q)
        for p in phrases:
            tp = _tokens(p)
            if tq or tp:
                best = max(best, len(tq & tp) / len(tq | tp))
    return best


def node_entity_type(g: RpgGraph, nid: str) -> str:
    node = g.nodes[nid]
    return "directory" if node.kind == "high" else node.level


def traversal_edges(g: RpgGraph) -> list[tuple[str, str, str]]:
    """Dependency edges plus every feature-forest edge labelled ``contains``."""
    edges = {(e.src, e.dst, e.kind) for e in g.dep_edges}
    edges |= {(p, c, "contains") for p, c in g.feature_edge_set()}
    return sorted(edges)


class Toolkit:
    """Tools bound to one immutable graph snapshot and the repository text."""

    def __init__(self, graph: RpgGraph, repo_root: str | Path | None = None, min_similarity: float = 0.2,
                 sources: dict[str, str] | None = None) -> None:
        self.g = graph
        self.min_similarity = min_similarity
        self.sources: dict[str, str] = dict(sources or {})
        if repo_root is not None:
            root = Path(repo_root)
            for node in graph.nodes.values():
                if node.level == "file" and node.path and node.path not in self.sources:
                    try:
                        self.sources[node.path] = (root / node.path).read_text(encoding="utf-8")
                    except (OSError, UnicodeDecodeError):
                        pass
        self.by_ref = graph.low_by_ref()
        self.by_feature = graph.high_by_path()
        self._out: dict[str, list[tuple[str, str]]] = {}
        self._in: dict[str, list[tuple[str, str]]] = {}
        for src, dst, kind in traversal_edges(graph):
            self._out.setdefault(src, []).append((dst, kind))
            self._in.setdefault(dst, []).append((src, kind))

    # -- entity resolution --------------------------------------------------

    def _hint(self, text: str, pool: list[str]) -> str:
        close = difflib.get_close_matches(text, pool, n=3, cutoff=0.6)
        return f"; did you mean {', '.join(close)}?" if close else ""

    def resolve_code(self, text: str, warnings: list[str]) -> str | None:
        if text in self.by_ref:
            return self.by_ref[text]
        if ":" not in text:
            # a bare qualified name resolves when it is unique
            hits = sorted(nid for ref, nid in self.by_ref.items() if ":" in ref and ref.split(":", 1)[1] == text)
            if len(hits) == 1:
                return hits[0]
            if len(hits) > 1:
                warnings.append(f"ambiguous code entity {text!r} matches {len(hits)} definitions; qualify it with its file")
                return None
        warnings.append(f"unknown code entity {text!r}" + self._hint(text, list(self.by_ref)))
        return None

    def resolve_feature(self, text: str, warnings: list[str]) -> str | None:
        key = text.strip("/")
        if key in self.by_feature:
            return self.by_feature[key]
        warnings.append(f"unknown feature entity {text!r}" + self._hint(key, list(self.by_feature)))
        return None

    def describe(self, nid: str) -> dict:
        node = self.g.nodes[nid]
        if node.kind == "high":
            return {
                "id": nid,
                "entity": self.g.feature_path(nid),
                "entity_type": "directory",
                "level": node.level,
                "feature": list(node.feature),
            }
        out = {
            "id": nid,
            "entity": node.code_ref,
            "entity_type": node.level,
            "file_path": node.path,
            "feature": list(node.feature),
            "feature_path": self.g.feature_path(self.g.file_node(nid) or nid),
        }
        if node.span is not None:
            out["start_line"], out["end_line"] = node.span
        return out

    def preview(self, path: str, span: tuple[int, int] | None) -> str | None:
        text = self.sources.get(path)
        if text is None:
            return None
        lines = text.splitlines()
        start, end = span or (1, len(lines))
        end = min(end, start + PREVIEW_LINES - 1)
        return "\n".join(lines[start - 1 : end])

    # -- SearchNode ---------------------------------------------------------

    def search_node(
        self,
        mode: str,
        feature_terms: list[str] | None = None,
        search_scopes: list[str] | None = None,
        search_terms: list[str] | None = None,
        line_nums: list[int] | None = None,
        file_path_or_pattern: str = "**/*.py",
    ) -> ToolResult:
        warnings: list[str] = []
        if mode not in MODES:
            raise ToolError(f"mode must be one of {', '.join(MODES)}")
        features = _str_list(feature_terms, "feature_terms", warnings)
        scopes = _str_list(search_scopes, "search_scopes", warnings)
        terms = _str_list(search_terms, "search_terms", warnings)
        if not isinstance(file_path_or_pattern, str) or not file_path_or_pattern:
            raise ToolError("file_path_or_pattern must be a non-empty string")
        if line_nums is not None:
            if (
                not isinstance(line_nums, list)
                or len(line_nums) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in line_nums)
                or not 1 <= line_nums[0] <= line_nums[1]
            ):
                raise ToolError("line_nums must be two integers [start, end] with 1 <= start <= end")
            if not any(t in self.sources or (t in self.by_ref and ":" not in t) for t in terms):
                raise ToolError("line_nums requires an exact file path in search_terms")
        if mode in ("features", "auto") and not features and feature_terms is None:
            raise ToolError(f"feature_terms is required in {mode} mode")
        if mode == "snippets" and search_terms is None:
            raise ToolError("search_terms is required in snippets mode")

        result: dict = {"mode": mode}
        if mode in ("features", "auto"):
            hits, top = self._feature_search(features, scopes, warnings)
            result["feature_hits"] = hits
            run_snippets = mode == "auto" and (not hits or top < self.min_similarity)
            if run_snippets:
                warnings.append("feature matches were weak; fell back to snippet search")
                if not terms:
                    terms = list(features)
                    warnings.append("search_terms missing; used feature_terms as keywords")
        else:
            run_snippets = True
        if run_snippets:
            result["snippet_hits"] = self._snippet_search(terms, line_nums, file_path_or_pattern, warnings)
        return ToolResult("SearchNode", True, result, warnings)

    def _feature_search(self, raw_terms: list[str], scopes: list[str], warnings: list[str]) -> tuple[list[dict], float]:
        query = []
        for t in raw_terms:
            try:
                q = normalize_feature(t)
            except FeatureRejected:
                warnings.append(f"feature_terms: ignored unusable phrase {t!r}")
                continue
            if q not in query:
                query.append(q)
        pool: set[str] | None = None
        for s in scopes:
            nid = self.resolve_feature(s, warnings)
            if nid is not None:
                pool = (pool or set()) | set(self.g.leaves_under(nid))
        if scopes and pool is None:
            warnings.append("no valid search_scopes; searched the whole graph")
        candidates = pool if pool is not None else {n for n, v in self.g.nodes.items() if v.kind == "low"}
        scored = []
        for nid in candidates:
            score = _pair_score(query, self.g.nodes[nid].feature)
            if score > 0:
                # on equal scores a definition outranks the file that contains it
                scored.append((-score, self.g.nodes[nid].level == "file", self.g.nodes[nid].code_ref or "", nid))
        scored.sort()
        hits = []
        for neg, _, _, nid in scored[:TOP_K]:
            entry = self.describe(nid)
            entry["score"] = round(-neg, 6)
            hits.append(entry)
        return hits, (-scored[0][0] if scored else 0.0)

    def _snippet_search(self, terms: list[str], line_nums: list[int] | None, pattern: str, warnings: list[str]) -> list[dict]:
        hits: list[dict] = []
        files = sorted(p for p in self.sources if (match_glob(p, pattern) if is_glob(pattern) else p == pattern))
        for term in terms:
            if term in self.sources:
                text = self.sources[term].splitlines()
                start, end = (line_nums or [1, max(1, len(text))])
                if line_nums and start > len(text):
                    warnings.append(f"line_nums beyond end of {term} ({len(text)} lines)")
                    continue
                end = min(end, len(text))
                hits.append({"kind": "file", "file_path": term, "start_line": start, "end_line": end,
                             "content": "\n".join(text[start - 1 : end])})
                continue
            if ":" in term and term in self.by_ref:
                nid = self.by_ref[term]
                entry = self.describe(nid)
                entry["kind"] = "entity"
                entry["content"] = self.preview(entry["file_path"], self.g.nodes[nid].span)
                hits.append(entry)
                continue
            found = 0
            for path in files:
                for no, line in enumerate(self.sources[path].splitlines(), 1):
                    if term in line:
                        if len(hits) >= MAX_SNIPPET_HITS:
                            warnings.append("snippet hit limit reached; narrow file_path_or_pattern")
                            return hits
                        hits.append({"kind": "line", "term": term, "file_path": path, "start_line": no,
                                     "end_line": no, "content": line.strip()})
                        found += 1
            if not found:
                warnings.append(f"no snippet matches for {term!r}")
        return hits

    # -- FetchNode ----------------------------------------------------------

    def fetch_node(self, code_entities: list[str] | None = None, feature_entities: list[str] | None = None) -> ToolResult:
        warnings: list[str] = []
        codes = _str_list(code_entities, "code_entities", warnings)
        feats = _str_list(feature_entities, "feature_entities", warnings)
        if code_entities in (None, []) and feature_entities in (None, []):
            raise ToolError("provide code_entities or feature_entities")
        entries = []
        for text in codes:
            nid = self.resolve_code(text, warnings)
            if nid is None:
                continue
            entry = self.describe(nid)
            entry["preview"] = self.preview(entry["file_path"], self.g.nodes[nid].span)
            if entry["preview"] is None:
                warnings.append(f"source unavailable for {entry['file_path']}")
            entries.append(entry)
        for text in feats:
            nid = self.resolve_feature(text, warnings)
            if nid is None:
                continue
            entry = self.describe(nid)
            entry["entity_type"] = "feature"
            entry["grounded_scopes"] = list(self.g.nodes[nid].grounded_scopes or [])
            entry["children"] = sorted(
                self.g.feature_path(c) if self.g.nodes[c].kind == "high" else self.g.nodes[c].code_ref or ""
                for c in self.g.child_ids(nid)
            )
            entries.append(entry)
        return ToolResult("FetchNode", True, {"entities": entries}, warnings)

    # -- ExploreRPG ---------------------------------------------------------

    def explore_rpg(
        self,
        start_code_entities: list[str] | None = None,
        start_feature_entities: list[str] | None = None,
        direction: str = "downstream",
        traversal_depth: int = 2,
        entity_type_filter: list[str] | None = None,
        dependency_type_filter: list[str] | None = None,
    ) -> ToolResult:
        warnings: list[str] = []
        if direction not in DIRECTIONS:
            raise ToolError(f"direction must be one of {', '.join(DIRECTIONS)}")
        if isinstance(traversal_depth, bool) or not isinstance(traversal_depth, int) or (traversal_depth < 1 and traversal_depth != -1):
            raise ToolError("traversal_depth must be a positive integer or -1")
        types = self._filter(entity_type_filter, ENTITY_KINDS, "entity_type_filter")
        kinds = self._filter(dependency_type_filter, DEP_KINDS, "dependency_type_filter")
        starts: list[str] = []
        for text in _str_list(start_code_entities, "start_code_entities", warnings):
            nid = self.resolve_code(text, warnings)
            if nid is not None:
                starts.append(nid)
        for text in _str_list(start_feature_entities, "start_feature_entities", warnings):
            nid = self.resolve_feature(text, warnings)
            if nid is not None:
                starts.append(nid)
        if not starts:
            raise ToolError("no valid start entity")
        dist, edges = self.traverse(sorted(set(starts)), direction, traversal_depth, types, kinds)
        nodes = []
        for nid in sorted(dist, key=lambda n: (dist[n], n)):
            entry = self.describe(nid)
            entry["distance"] = dist[nid]
            nodes.append(entry)
        result = {
            "nodes": nodes,
            "edges": [{"src": s, "dst": d, "kind": k} for s, d, k in edges],
        }
        return ToolResult("ExploreRPG", True, result, warnings)

    @staticmethod
    def _filter(value: Any, allowed: tuple[str, ...], name: str) -> set[str] | None:
        if value is None:
            return None
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ToolError(f"{name} must be a list of strings")
        bad = sorted(set(value) - set(allowed))
        if bad:
            raise ToolError(f"{name}: invalid values {bad}; allowed {list(allowed)}")
        return set(value)

    def traverse(
        self, starts: list[str], direction: str, depth: int, types: set[str] | None, kinds: set[str] | None
    ) -> tuple[dict[str, int], list[tuple[str, str, str]]]:
        """Level-order expansion; returns distances and the edges walked."""
        dist = {s: 0 for s in starts}
        anchors = set(starts)
        walked: set[tuple[str, str, str]] = set()
        queue = deque(sorted(starts))
        while queue:
            cur = queue.popleft()
            if depth != -1 and dist[cur] >= depth:
                continue
            steps: list[tuple[str, tuple[str, str, str]]] = []
            if direction in ("downstream", "both"):
                steps += [(dst, (cur, dst, k)) for dst, k in self._out.get(cur, [])]
            if direction in ("upstream", "both"):
                steps += [(src, (src, cur, k)) for src, k in self._in.get(cur, [])]
            for nxt, edge in sorted(steps):
                if kinds is not None and edge[2] not in kinds:
                    continue
                if types is not None and nxt not in anchors and node_entity_type(self.g, nxt) not in types:
                    continue
                walked.add(edge)
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        return dist, sorted(walked)

    # -- dispatch -----------------------------------------------------------

    def handlers(self) -> dict[str, Callable[..., ToolResult]]:
        return {"SearchNode": self.search_node, "FetchNode": self.fetch_node, "ExploreRPG": self.explore_rpg}

    def dispatch(self, request: Any) -> ToolResult:
        """Run one request; failures become error results instead of exceptions."""
        name = request.get("tool_name") if isinstance(request, dict) else None
        if not isinstance(request, dict) or name not in TOOLS:
            return ToolResult(str(name), False, error=f"unknown tool {name!r}; expected one of {', '.join(TOOLS)}")
        params = request.get("parameters", {})
        if params is None:
            params = {}
        if not isinstance(params, dict):
            return ToolResult(name, False, error="parameters must be an object")
        handler = self.handlers()[name]
        signature = inspect.signature(handler).parameters
        unknown = sorted(set(params) - set(signature))
        if unknown:
            return ToolResult(name, False, error=f"unknown parameters {unknown}; allowed {sorted(signature)}")
        missing = [n for n, p in signature.items() if p.default is inspect.Parameter.empty and n not in params]
        if missing:
            return ToolResult(name, False, error=f"missing required parameters {missing}")
        try:
            return handler(**params)
        except ToolError as exc:
            return ToolResult(name, False, error=str(exc))
        except Exception as exc:  # defensive: a tool call must never take the service down
            return ToolResult(name, False, error=f"internal error: {type(exc).__name__}: {exc}")


# --------------------------------------------------------------------------
# line-delimited JSON service


class ToolService:
    """Serves requests against the current snapshot; ``publish`` swaps it atomically."""

    def __init__(self, toolkit: Toolkit, loader: Callable[[], Toolkit] | None = None) -> None:
        self._toolkit = toolkit
        self._loader = loader
        self._lock = threading.Lock()

    @property
    def toolkit(self) -> Toolkit:
        with self._lock:
            return self._toolkit

    def publish(self, toolkit: Toolkit) -> None:
        with self._lock:
            self._toolkit = toolkit

    def handle_line(self, line: str) -> str:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"id": None, "ok": False, "error": f"invalid JSON: {exc.msg}"})
        rid = req.get("id") if isinstance(req, dict) else None
        if isinstance(req, dict) and req.get("op") == "reload":
            if self._loader is None:
                return json.dumps({"id": rid, "ok": False, "error": "reload not configured"})
            try:
                self.publish(self._loader())
            except Exception as exc:
                return json.dumps({"id": rid, "ok": False, "error": f"reload failed: {exc}"})
            return json.dumps({"id": rid, "ok": True, "version": self.toolkit.g.version})
        if isinstance(req, dict):
            req = {k: v for k, v in req.items() if k != "id"}
        out = self.toolkit.dispatch(req).as_dict()
        out["id"] = rid
        return json.dumps(out, sort_keys=True)

    def serve_stream(self, infile: IO[str], outfile: IO[str]) -> None:
        for line in infile:
            if not line.strip():
                continue
            outfile.write(self.handle_line(line) + "\n")
            outfile.flush()

    def serve_unix(self, path: str) -> socketserver.BaseServer:
        service = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                for raw in self.rfile:
                    line = raw.decode("utf-8", "replace")
                    if line.strip():
                        self.wfile.write((service.handle_line(line) + "\n").encode())
                        self.wfile.flush()

        return socketserver.ThreadingUnixStreamServer(path, Handler)
