"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 validation findings,
3 pipeline or provider failure.
"""

from __future__ import annotations

import argparse
import io
import json
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path
from typing import Any, Sequence

from rpgkit.codeindex import scan_repository
from rpgkit.config import Config, ConfigError, load_config, make_provider
from rpgkit.evalkit import EvalError, score_run
from rpgkit.evolution import UpdateError, apply_commit
from rpgkit.extractor import PipelineError, build_with_report
from rpgkit.graph import RpgFormatError, load, save, validate
from rpgkit.semantic import ProviderError
from rpgkit.toolkit import ToolService, Toolkit

EXIT_OK, EXIT_USAGE, EXIT_FINDINGS, EXIT_FAILURE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageFailure(Exception):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(message)
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage()}")


def _emit(args: argparse.Namespace, payload: Any, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=1, sort_keys=True))
    else:
        print(human)


def _config(args: argparse.Namespace) -> Config:
    overrides: dict[str, object] = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides)


def _load_graph(path: str):
    try:
        return load(path)
    except OSError as exc:
        raise UsageError(f"cannot read graph {path}: {exc}") from exc
    except RpgFormatError as exc:
        raise StageFailure("load", str(exc)) from exc


# --------------------------------------------------------------------------
# commands


def cmd_build(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if not Path(args.root).is_dir():
        raise UsageError(f"not a directory: {args.root}")
    result = build_with_report(args.root, cfg)
    out = args.output or cfg.store_graph
    save(result.graph, out)
    diag = args.diagnostics or cfg.store_diagnostics
    result.write_diagnostics(diag)
    g = result.graph
    payload = {
        "graph": out,
        "diagnostics": diag,
        "nodes": len(g.nodes),
        "dep_edges": len(g.dep_edges),
        "usage": {k: v.as_dict() for k, v in sorted(result.usage.items())},
    }
    _emit(args, payload, f"built {out}: {len(g.nodes)} nodes, {len(g.dep_edges)} dependency edges")
    return EXIT_OK


def _git(repo: str, *argv: str) -> bytes:
    try:
        return subprocess.run(["git", "-C", repo, *argv], check=True, capture_output=True).stdout
    except FileNotFoundError as exc:
        raise StageFailure("git", "git binary not found") from exc
    except subprocess.CalledProcessError as exc:
        raise StageFailure("git", exc.stderr.decode(errors="replace").strip()) from exc


def _checkout(repo: str, rev: str, dest: Path) -> Path:
    data = _git(repo, "archive", "--format=tar", rev)
    with tarfile.open(fileobj=io.BytesIO(data)) as tar:
        tar.extractall(dest)
    return dest


def cmd_update(args: argparse.Namespace) -> int:
    cfg = _config(args)
    g = _load_graph(args.graph)
    with tempfile.TemporaryDirectory() as tmp:
        if args.git:
            if ".." not in args.git:
                raise UsageError("--git expects a range A..B")
            old, new = args.git.split("..", 1)
            diff_text = _git(args.repo, "diff", "--no-color", "--no-ext-diff", "--no-renames", old, new).decode("utf-8")
            before_dir = _checkout(args.repo, old, Path(tmp) / "before")
            after_dir = _checkout(args.repo, new, Path(tmp) / "after")
        else:
            if not (args.diff and args.before and args.after):
                raise UsageError("update needs --diff, --before and --after, or --git")
            diff_text = Path(args.diff).read_text(encoding="utf-8")
            before_dir, after_dir = Path(args.before), Path(args.after)
        before = scan_repository(before_dir, cfg.include_globs, cfg.exclude_globs)
        after = scan_repository(after_dir, cfg.include_globs, cfg.exclude_globs)
    provider = make_provider(cfg)
    g2, report = apply_commit(g, diff_text, before, after, provider, cfg.evolution_tau_drift, cfg.extractor_min_scope_depth)
    out = args.output or args.graph
    save(g2, out)
    rep = report.as_dict()
    human = (
        f"updated {out}: " + ", ".join(f"{k} {v}" for k, v in rep["applied"].items())
        + f"; pruned {len(report.pruned)}, rerouted {len(report.rerouted)}, prompt tokens {report.prompt_tokens}"
    )
    _emit(args, rep, human)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        g = load(args.graph)
    except OSError as exc:
        raise UsageError(f"cannot read graph {args.graph}: {exc}") from exc
    except RpgFormatError as exc:
        payload = {"ok": False, "findings": [{"code": "parse error", "node_ids": [], "message": str(exc)}], "notes": []}
        _emit(args, payload, f"parse error: {exc}")
        return EXIT_FINDINGS
    report = validate(g)
    lines = [f"{f.code}: {', '.join(f.node_ids)}: {f.message}" for f in report.findings]
    lines += [f"note {f.code}: {', '.join(f.node_ids)}" for f in report.notes]
    _emit(args, report.as_dict(), "\n".join(lines) if lines else "valid")
    return EXIT_OK if report.ok else EXIT_FINDINGS


QUERY_TOOLS = {"search": "SearchNode", "fetch": "FetchNode", "explore": "ExploreRPG"}


def _query_params(args: argparse.Namespace) -> dict:
    names = {
        "search": ["mode", "feature_terms", "search_scopes", "search_terms", "line_nums", "file_path_or_pattern"],
        "fetch": ["code_entities", "feature_entities"],
        "explore": [
            "start_code_entities",
            "start_feature_entities",
            "direction",
            "traversal_depth",
            "entity_type_filter",
            "dependency_type_filter",
        ],
    }[args.tool]
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def cmd_query(args: argparse.Namespace) -> int:
    request = {"tool_name": QUERY_TOOLS[args.tool], "parameters": _query_params(args)}
    if args.server:
        import httpx

        try:
            resp = httpx.post(args.server.rstrip("/") + "/query", json=request, timeout=30)
        except httpx.HTTPError as exc:
            raise StageFailure("query", f"server unreachable: {exc}") from exc
        if resp.status_code == 422:
            raise UsageError(f"server rejected request: {resp.text}")
        if resp.status_code != 200:
            raise StageFailure("query", f"server returned {resp.status_code}: {resp.text}")
        result = resp.json()
    else:
        if not args.graph:
            raise UsageError("query needs --graph or --server")
        cfg = _config(args)
        tk = Toolkit(_load_graph(args.graph), args.repo, cfg.routing_min_similarity)
        result = tk.dispatch(request).as_dict()
    if args.json:
        print(json.dumps(result, indent=1, sort_keys=True))
    else:
        print(json.dumps(result.get("result"), indent=1, sort_keys=True))
        for w in result.get("warnings", []):
            print(f"warning: {w}", file=sys.stderr)
        if result.get("error"):
            print(f"error: {result['error']}", file=sys.stderr)
    return EXIT_OK if result.get("ok") else EXIT_USAGE


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _config(args)

    def loader() -> Toolkit:
        return Toolkit(_load_graph(args.graph), args.repo, cfg.routing_min_similarity)

    if args.http:
        import uvicorn

        from rpgkit.service import create_app

        host, _, port = args.http.rpartition(":")
        app = create_app(args.graph, args.repo, min_similarity=cfg.routing_min_similarity)
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
        return EXIT_OK
    service = ToolService(loader(), loader)
    if args.socket:
        server = service.serve_unix(args.socket)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
            Path(args.socket).unlink(missing_ok=True)
        return EXIT_OK
    service.serve_stream(sys.stdin, sys.stdout)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        report = score_run(args.gold, args.pred, args.granularity, args.top_n)
    except EvalError as exc:
        raise StageFailure("eval", str(exc)) from exc
    if args.json:
        print(json.dumps(report.as_dict(), indent=1, sort_keys=True))
    else:
        print(json.dumps(report.as_dict(), sort_keys=True))
        print(report.table())
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _list_flag(p: argparse.ArgumentParser, name: str, help_text: str) -> None:
    p.add_argument(f"--{name}", f"--{name.replace('_', '-')}", dest=name, nargs="+", help=help_text)


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--config", help="config file (default: $RPG_CONFIG)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    parser = _Parser(prog="rpgkit", description="Work with repository planning graphs.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("build", parents=[common], help="build a graph from a source tree")
    p.add_argument("root")
    p.add_argument("-o", "--output")
    p.add_argument("--diagnostics")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("update", parents=[common], help="apply one commit to a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--diff")
    p.add_argument("--before")
    p.add_argument("--after")
    p.add_argument("--git", metavar="A..B")
    p.add_argument("--repo", default=".")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("validate", parents=[common], help="check graph invariants")
    p.add_argument("graph")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("query", parents=[common], help="run a query tool")
    qsub = p.add_subparsers(dest="tool", parser_class=_Parser)
    for tool in QUERY_TOOLS:
        q = qsub.add_parser(tool, parents=[common])
        q.add_argument("--graph")
        q.add_argument("--repo", help="repository root for previews and snippets")
        q.add_argument("--server", help="URL of a running HTTP service")
        if tool == "search":
            q.add_argument("--mode", choices=["features", "snippets", "auto"], required=True)
            _list_flag(q, "feature_terms", "behaviour phrases")
            _list_flag(q, "search_scopes", "feature paths restricting the search")
            _list_flag(q, "search_terms", "paths, file:Qual names or keywords")
            q.add_argument("--line_nums", "--line-nums", dest="line_nums", nargs=2, type=int, metavar=("START", "END"))
            q.add_argument("--file_path_or_pattern", "--file-path-or-pattern", dest="file_path_or_pattern")
        elif tool == "fetch":
            _list_flag(q, "code_entities", "file paths or file:Qual names")
            _list_flag(q, "feature_entities", "feature paths")
        else:
            _list_flag(q, "start_code_entities", "file paths or file:Qual names")
            _list_flag(q, "start_feature_entities", "feature paths")
            q.add_argument("--direction", choices=["upstream", "downstream", "both"])
            q.add_argument("--traversal_depth", "--traversal-depth", dest="traversal_depth", type=int)
            _list_flag(q, "entity_type_filter", "node types to keep")
            _list_flag(q, "dependency_type_filter", "edge kinds to follow")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("serve", parents=[common], help="serve query tools")
    p.add_argument("graph")
    p.add_argument("--repo")
    p.add_argument("--socket", help="unix socket path (default: standard streams)")
    p.add_argument("--http", metavar="HOST:PORT", help="serve HTTP instead of line-delimited JSON")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", parents=[common], help="score localization predictions")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--granularity", choices=["file", "function"], default="function")
    p.add_argument("--top-n", "--top_n", dest="top_n", type=int)
    p.set_defaults(func=cmd_eval)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None or (args.command == "query" and not args.tool):
            raise UsageError(parser.format_usage())
        return args.func(args)
    except UsageError as exc:
        print(f"error [usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (PipelineError, UpdateError) as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ProviderError as exc:
        print(f"error [provider]: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
