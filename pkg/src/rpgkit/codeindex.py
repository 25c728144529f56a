"""Scan a Python repository into code entities and static dependency edges.

Entities are files, classes, functions and methods with 1-based inclusive line
spans. Dependencies are resolved lexically and single-hop: a name is looked up in
the enclosing function scopes, then the module scope (local definitions before
imported names). There is no type inference; ``obj.method()`` only resolves when
``obj`` is ``self``/``cls`` inside a method, a module, or an in-repo class.
"""

from __future__ import annotations

import ast
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from rpgkit._paths import check_glob, match_glob

logger = logging.getLogger(__name__)

ENTITY_KINDS = ("directory", "file", "class", "function", "method")
DEP_KINDS = ("composes", "contains", "inherits", "invokes", "imports")
CODE_KINDS = ("class", "function", "method")

DEFAULT_INCLUDE = ("**/*.py",)
DEFAULT_EXCLUDE = (".*/**", "**/.*/**", "**/__pycache__/**")


class ScanError(Exception):
    """Fatal scan failure (missing root, bad glob)."""


@dataclass(frozen=True)
class EntityRef:
    path: str
    qualified_name: str | None
    kind: str
    span: tuple[int, int]

    def __post_init__(self) -> None:
        if self.kind not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")
        if self.kind in ("file", "directory") and self.qualified_name is not None:
            raise ValueError(f"{self.kind} entity cannot carry a qualified name")
        if self.kind in CODE_KINDS and not self.qualified_name:
            raise ValueError(f"{self.kind} entity requires a qualified name")
        if self.span[0] > self.span[1]:
            raise ValueError(f"bad span {self.span}")

    @property
    def key(self) -> tuple[str, str | None, str]:
        """Identity independent of position."""
        return (self.path, self.qualified_name, self.kind)

    @property
    def name(self) -> str:
        if self.qualified_name:
            return self.qualified_name.rsplit(".", 1)[-1]
        return self.path.rsplit("/", 1)[-1]

    def contains_line(self, line: int) -> bool:
        return self.span[0] <= line <= self.span[1]

    def __str__(self) -> str:
        if self.qualified_name is None:
            return self.path
        return f"{self.path}:{self.qualified_name}"


@dataclass(frozen=True)
class DepEdge:
    src: EntityRef
    dst: EntityRef
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in DEP_KINDS:
            raise ValueError(f"unknown dependency kind {self.kind!r}")
        if self.kind != "invokes" and self.src.key == self.dst.key:
            raise ValueError(f"self-edge not allowed for {self.kind}")

    @property
    def key(self) -> tuple:
        return (self.src.key, self.dst.key, self.kind)


def _sort_key(e: EntityRef) -> tuple:
    return (e.path, e.span[0], -e.span[1], ENTITY_KINDS.index(e.kind), e.qualified_name or "")


def _edge_sort_key(e: DepEdge) -> tuple:
    return (_sort_key(e.src), _sort_key(e.dst), e.kind)


@dataclass
class EntitySet:
    """Immutable-by-convention result of :func:`scan_repository`."""

    root: str | None
    entities: list[EntityRef]
    dep_edges: list[DepEdge]
    source_text: dict[str, str]
    parse_errors: dict[str, str] = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_key: dict[tuple, EntityRef] = {e.key: e for e in self.entities}
        self._by_path: dict[str, list[EntityRef]] = {}
        for e in self.entities:
            self._by_path.setdefault(e.path, []).append(e)
        self._by_qual: dict[tuple[str, str], EntityRef] = {
            (e.path, e.qualified_name): e for e in self.entities if e.qualified_name
        }
        self._parent: dict[tuple, EntityRef] = {}
        for edge in self.dep_edges:
            if edge.kind == "contains":
                self._parent[edge.dst.key] = edge.src

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EntitySet):
            return NotImplemented
        return (
            self.entities == other.entities
            and self.dep_edges == other.dep_edges
            and self.source_text == other.source_text
            and self.parse_errors == other.parse_errors
        )

    @property
    def files(self) -> list[str]:
        return sorted(self._by_path)

    def has_path(self, path: str) -> bool:
        return path in self._by_path

    def file_entity(self, path: str) -> EntityRef | None:
        return self._by_key.get((path, None, "file"))

    def in_file(self, path: str) -> list[EntityRef]:
        return list(self._by_path.get(path, ()))

    def lookup(self, key: tuple) -> EntityRef | None:
        return self._by_key.get(key)

    def by_qualname(self, path: str, qualified_name: str) -> EntityRef | None:
        return self._by_qual.get((path, qualified_name))

    def parent_of(self, entity: EntityRef) -> EntityRef | None:
        return self._parent.get(entity.key)

    def segment(self, entity: EntityRef) -> str:
        """Source lines covered by the entity's span."""
        text = self.source_text.get(entity.path, "")
        lines = text.splitlines()
        start, end = entity.span
        return "\n".join(lines[start - 1 : end])

    def own_source(self, entity: EntityRef) -> str:
        """Entity source with the lines of its nested definitions removed.

        Every line then belongs to exactly one semantic unit, which keeps
        batched feature parsing from analysing a method twice.
        """
        text = self.source_text.get(entity.path, "")
        lines = text.splitlines()
        start, end = entity.span
        skip: set[int] = set()
        for child in self.in_file(entity.path):
            parent = self._parent.get(child.key)
            if parent is not None and parent.key == entity.key:
                skip.update(range(child.span[0], child.span[1] + 1))
        return "\n".join(lines[i - 1] for i in range(start, min(end, len(lines)) + 1) if i not in skip)

    def write_diagnostics(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.diagnostics:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# scanning


def _iter_source_files(root: Path, include: Iterable[str], exclude: Iterable[str]) -> Iterator[str]:
    include = tuple(include)
    exclude = tuple(exclude)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        rel_dir = os.path.relpath(dirpath, root)
        rel_dir = "" if rel_dir == "." else rel_dir.replace(os.sep, "/")
        for name in sorted(filenames):
            rel = f"{rel_dir}/{name}" if rel_dir else name
            if not any(match_glob(rel, g) for g in include):
                continue
            if any(match_glob(rel, g) for g in exclude):
                continue
            yield rel


def _child_stmt_lists(stmt: ast.stmt) -> Iterator[list[ast.stmt]]:
    """Statement lists nested in a compound statement that stay in the same scope."""
    for name in ("body", "orelse", "finalbody"):
        block = getattr(stmt, name, None)
        if isinstance(block, list) and block and isinstance(block[0], ast.stmt):
            yield block
    for handler in getattr(stmt, "handlers", ()) or ():
        yield handler.body
    for case in getattr(stmt, "cases", ()) or ():
        yield case.body


def iter_scope_defs(body: list[ast.stmt]) -> Iterator[ast.stmt]:
    """Yield every def/class statement belonging to this scope (through if/try/with)."""
    for stmt in body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            yield stmt
        else:
            for block in _child_stmt_lists(stmt):
                yield from iter_scope_defs(block)


def _def_span(node: ast.AST) -> tuple[int, int]:
    start = node.lineno
    for deco in getattr(node, "decorator_list", ()):
        start = min(start, deco.lineno)
    return (start, node.end_lineno or node.lineno)


def _collect_entities(path: str, tree: ast.Module) -> tuple[list[EntityRef], list[tuple[EntityRef, EntityRef]]]:
    spans: dict[tuple[str, str], tuple[int, int]] = {}
    order: list[tuple[str, str]] = []
    parents: dict[tuple[str, str], tuple[str, str] | None] = {}

    def visit(body: list[ast.stmt], prefix: str, parent_kind: str, parent: tuple[str, str] | None) -> None:
        for node in iter_scope_defs(body):
            qual = f"{prefix}.{node.name}" if prefix else node.name
            if isinstance(node, ast.ClassDef):
                kind = "class"
            elif parent_kind == "class":
                kind = "method"
            else:
                kind = "function"
            key = (qual, kind)
            span = _def_span(node)
            if key in spans:
                # decorator variants (property getter/setter, overloads) merge into one entity
                old = spans[key]
                spans[key] = (min(old[0], span[0]), max(old[1], span[1]))
            else:
                spans[key] = span
                order.append(key)
                parents[key] = parent
            visit(node.body, qual, kind, key)

    visit(tree.body, "", "file", None)
    entities = {key: EntityRef(path, key[0], key[1], spans[key]) for key in order}
    return list(entities.values()), [
        (entities[parents[key]] if parents[key] else None, entities[key]) for key in order
    ]


def scan_repository(
    root: str | os.PathLike,
    include_globs: Iterable[str] = DEFAULT_INCLUDE,
    exclude_globs: Iterable[str] = DEFAULT_EXCLUDE,
) -> EntitySet:
    root_path = Path(root)
    if not root_path.is_dir():
        raise ScanError(f"repository root does not exist or is not a directory: {root}")
    include_globs = tuple(include_globs)
    exclude_globs = tuple(exclude_globs)
    try:
        for g in include_globs + exclude_globs:
            check_glob(g)
    except ValueError as exc:
        raise ScanError(str(exc)) from exc

    entities: list[EntityRef] = []
    edges: list[DepEdge] = []
    sources: dict[str, str] = {}
    parse_errors: dict[str, str] = {}
    diagnostics: list[dict] = []

    for rel in _iter_source_files(root_path, include_globs, exclude_globs):
        try:
            text = (root_path / rel).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping unreadable file %s: %s", rel, exc)
            diagnostics.append({"path": rel, "issue": f"unreadable: {exc}"})
            continue
        sources[rel] = text
        n_lines = max(1, len(text.splitlines()))
        file_entity = EntityRef(rel, None, "file", (1, n_lines))
        entities.append(file_entity)
        try:
            tree = ast.parse(text, filename=rel)
        except (SyntaxError, ValueError) as exc:
            parse_errors[rel] = str(exc)
            diagnostics.append({"path": rel, "issue": f"parse error: {exc}"})
            continue
        found, nesting = _collect_entities(rel, tree)
        entities.extend(found)
        for parent, child in nesting:
            edges.append(DepEdge(parent or file_entity, child, "contains"))

    entities.sort(key=_sort_key)
    edges.sort(key=_edge_sort_key)
    return EntitySet(str(root_path), entities, edges, sources, parse_errors, diagnostics)


def entity_at(es: EntitySet, path: str, line: int) -> EntityRef | None:
    """Innermost entity whose span holds ``line``; the file entity otherwise.

    Returns ``None`` only when ``path`` is unknown to the entity set.
    """
    candidates = es.in_file(path)
    if not candidates:
        return None
    best = es.file_entity(path)
    best_len = None
    for ent in candidates:
        if ent.kind == "file" or not ent.contains_line(line):
            continue
        length = ent.span[1] - ent.span[0]
        depth = ent.qualified_name.count(".")
        if best_len is None or (length, -depth) < best_len:
            best, best_len = ent, (length, -depth)
    return best


# --------------------------------------------------------------------------
# dependency resolution


def module_name(path: str) -> str:
    """Dotted module name of a repo-relative ``.py`` path (packages drop ``__init__``)."""
    stem = path[:-3] if path.endswith(".py") else path
    parts = stem.split("/")
    if parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(parts)


class ModuleIndex:
    """Dotted module names of in-repo files, with a ``src/`` layout alias."""

    def __init__(self, paths: Iterable[str]) -> None:
        self.files: dict[str, str] = {}
        self.packages: set[str] = set()
        for p in sorted(paths):
            if not p.endswith(".py"):
                continue
            names = [module_name(p)]
            if p.startswith("src/"):
                names.append(module_name(p[4:]))
            for name in names:
                if not name:
                    continue
                self.files.setdefault(name, p)
                parts = name.split(".")
                for i in range(1, len(parts)):
                    self.packages.add(".".join(parts[:i]))

    def file_for(self, module: str) -> str | None:
        return self.files.get(module)

    def is_module(self, module: str) -> bool:
        return module in self.files or module in self.packages

    def module_of(self, path: str) -> str:
        name = module_name(path)
        return name


def _absolute_module(path: str, level: int, module: str | None) -> str | None:
    if level == 0:
        return module
    pkg_parts = module_name(path).split(".") if module_name(path) else []
    if not path.endswith("__init__.py"):
        pkg_parts = pkg_parts[:-1]
    if level - 1 > len(pkg_parts):
        return None
    base = pkg_parts[: len(pkg_parts) - (level - 1)]
    if module:
        base = base + module.split(".")
    return ".".join(base)


def referenced_modules(es: EntitySet, path: str) -> set[str]:
    """Absolute dotted names mentioned by the import statements of one file."""
    text = es.source_text.get(path)
    if text is None or path in es.parse_errors:
        return set()
    tree = ast.parse(text)
    found: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            found.update(alias.name for alias in node.names)
        elif isinstance(node, ast.ImportFrom):
            base = _absolute_module(path, node.level, node.module)
            if base is None:
                continue
            if base:
                found.add(base)
            found.update(f"{base}.{a.name}" if base else a.name for a in node.names if a.name != "*")
    return found


@dataclass
class _Scope:
    kind: str  # module | class | function
    entity: EntityRef
    parent: "_Scope | None"
    bindings: dict[str, tuple[str, object]] = field(default_factory=dict)
    self_name: str | None = None
    owner_class: EntityRef | None = None

    def lookup(self, name: str) -> tuple[str, object] | None:
        scope: _Scope | None = self
        first = True
        while scope is not None:
            if first or scope.kind != "class":
                if name in scope.bindings:
                    return scope.bindings[name]
            first = False
            scope = scope.parent
        return None


def _dotted(expr: ast.expr) -> list[str] | None:
    parts: list[str] = []
    while isinstance(expr, ast.Attribute):
        parts.append(expr.attr)
        expr = expr.value
    if isinstance(expr, ast.Name):
        parts.append(expr.id)
        return parts[::-1]
    return None


def _stored_names(body: list[ast.stmt]) -> set[str]:
    """Names assigned in a function body, excluding nested scopes."""
    names: set[str] = set()
    stack: list[ast.AST] = list(body)
    while stack:
        node = stack.pop()
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef, ast.Lambda)):
            continue
        if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Store):
            names.add(node.id)
        stack.extend(ast.iter_child_nodes(node))
    return names


class _FileResolver:
    def __init__(self, es: EntitySet, modules: ModuleIndex, path: str, tally: Counter) -> None:
        self.es = es
        self.modules = modules
        self.path = path
        self.tally = tally
        self.edges: set[tuple] = set()
        self.out: list[DepEdge] = []

    # -- bindings ----------------------------------------------------------

    def _top_level(self, module: str, name: str) -> EntityRef | None:
        target = self.modules.file_for(module)
        if target is None:
            return None
        ent = self.es.by_qualname(target, name)
        if ent is not None and ent.kind in ("class", "function"):
            return ent
        return None

    def _import_bindings(self, stmts: Iterable[ast.stmt], bindings: dict) -> None:
        for node in stmts:
            if isinstance(node, ast.Import):
                for alias in node.names:
                    if alias.asname:
                        bindings[alias.asname] = ("module", alias.name)
                    else:
                        head = alias.name.split(".")[0]
                        bindings[head] = ("module", head)
            elif isinstance(node, ast.ImportFrom):
                base = _absolute_module(self.path, node.level, node.module)
                if base is None:
                    continue
                for alias in node.names:
                    if alias.name == "*":
                        continue
                    local = alias.asname or alias.name
                    sub = f"{base}.{alias.name}" if base else alias.name
                    if self.modules.is_module(sub):
                        bindings[local] = ("module", sub)
                        continue
                    ent = self._top_level(base, alias.name)
                    if ent is not None:
                        bindings[local] = ("entity", ent)
                    else:
                        bindings[local] = ("unresolved", sub)

    def _scope_statements(self, body: list[ast.stmt]) -> Iterator[ast.stmt]:
        for stmt in body:
            yield stmt
            if not isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                for block in _child_stmt_lists(stmt):
                    yield from self._scope_statements(block)

    def _make_scope(self, kind: str, entity: EntityRef, parent: _Scope | None, body: list[ast.stmt],
                    args: ast.arguments | None = None) -> _Scope:
        scope = _Scope(kind, entity, parent)
        if kind == "function":
            local = _stored_names(body)
            if args is not None:
                for a in args.posonlyargs + args.args + args.kwonlyargs:
                    local.add(a.arg)
                if args.vararg:
                    local.add(args.vararg.arg)
                if args.kwarg:
                    local.add(args.kwarg.arg)
            for name in local:
                scope.bindings[name] = ("local", None)
        self._import_bindings(self._scope_statements(body), scope.bindings)
        prefix = entity.qualified_name
        for node in iter_scope_defs(body):
            qual = f"{prefix}.{node.name}" if prefix else node.name
            ent = self.es.by_qualname(self.path, qual)
            if ent is not None:
                scope.bindings[node.name] = ("entity", ent)
        return scope

    # -- resolution --------------------------------------------------------

    def resolve(self, expr: ast.expr, scope: _Scope) -> EntityRef | None:
        parts = _dotted(expr)
        if parts is None:
            return None
        head, rest = parts[0], parts[1:]
        if rest and scope.self_name is not None and head == scope.self_name and scope.owner_class is not None:
            if len(rest) == 1:
                return self.es.by_qualname(scope.owner_class.path, f"{scope.owner_class.qualified_name}.{rest[0]}")
            return None
        binding = scope.lookup(head)
        if binding is None or binding[0] in ("local", "unresolved"):
            return None
        cur = binding
        for part in rest:
            kind, value = cur
            if kind == "module":
                sub = f"{value}.{part}"
                if self.modules.is_module(sub):
                    cur = ("module", sub)
                    continue
                ent = self._top_level(value, part)
                if ent is None:
                    return None
                cur = ("entity", ent)
            elif kind == "entity" and value.kind == "class":
                ent = self.es.by_qualname(value.path, f"{value.qualified_name}.{part}")
                if ent is None:
                    return None
                cur = ("entity", ent)
            else:
                return None
        if cur[0] == "entity":
            return cur[1]
        return None

    def _emit(self, src: EntityRef, dst: EntityRef, kind: str) -> None:
        if kind != "invokes" and src.key == dst.key:
            return
        key = (src.key, dst.key, kind)
        if key not in self.edges:
            self.edges.add(key)
            self.out.append(DepEdge(src, dst, kind))

    # -- walking -----------------------------------------------------------

    def run(self, tree: ast.Module, file_entity: EntityRef) -> list[DepEdge]:
        self._imports(tree, file_entity)
        scope = self._make_scope("module", file_entity, None, tree.body)
        self._walk_body(tree.body, scope)
        return self.out

    def _imports(self, tree: ast.Module, file_entity: EntityRef) -> None:
        for node in ast.walk(tree):
            targets: list[str] = []
            if isinstance(node, ast.Import):
                for alias in node.names:
                    target = self.modules.file_for(alias.name)
                    if target:
                        targets.append(target)
            elif isinstance(node, ast.ImportFrom):
                base = _absolute_module(self.path, node.level, node.module)
                if base is not None:
                    if base and self.modules.file_for(base):
                        targets.append(self.modules.file_for(base))
                    for alias in node.names:
                        sub = f"{base}.{alias.name}" if base else alias.name
                        if self.modules.file_for(sub):
                            targets.append(self.modules.file_for(sub))
            else:
                continue
            resolved = False
            for target in targets:
                resolved = True
                dst = self.es.file_entity(target)
                if dst is not None and target != self.path:
                    self._emit(file_entity, dst, "imports")
            if not resolved:
                self.tally["unresolved_import"] += 1

    def _walk_body(self, body: list[ast.stmt], scope: _Scope) -> None:
        for stmt in body:
            self._walk(stmt, scope)

    def _walk(self, node: ast.AST, scope: _Scope) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            for deco in node.decorator_list:
                self._walk(deco, scope)
            for default in node.args.defaults + [d for d in node.args.kw_defaults if d is not None]:
                self._walk(default, scope)
            qual = f"{scope.entity.qualified_name}.{node.name}" if scope.entity.qualified_name else node.name
            ent = self.es.by_qualname(self.path, qual)
            if ent is None:
                return
            inner = self._make_scope("function", ent, scope, node.body, node.args)
            if ent.kind == "method" and scope.kind == "class":
                inner.owner_class = scope.entity
                is_static = any(_dotted(d) == ["staticmethod"] for d in node.decorator_list)
                all_args = node.args.posonlyargs + node.args.args
                if all_args and not is_static:
                    inner.self_name = all_args[0].arg
                self._self_composes(node.body, inner)
            self._walk_body(node.body, inner)
            return
        if isinstance(node, ast.ClassDef):
            for deco in node.decorator_list:
                self._walk(deco, scope)
            for kw in node.keywords:
                self._walk(kw.value, scope)
            qual = f"{scope.entity.qualified_name}.{node.name}" if scope.entity.qualified_name else node.name
            ent = self.es.by_qualname(self.path, qual)
            if ent is None:
                return
            for base in node.bases:
                self._walk(base, scope)
                target = self.resolve(base, scope)
                if target is not None and target.kind == "class":
                    self._emit(ent, target, "inherits")
                elif _dotted(base) is not None:
                    self.tally["unresolved_base"] += 1
            inner = self._make_scope("class", ent, scope, node.body)
            self._class_composes(node.body, inner)
            self._walk_body(node.body, inner)
            return
        if isinstance(node, ast.Call):
            target = self.resolve(node.func, scope)
            if target is not None and target.kind in CODE_KINDS:
                self._emit(scope.entity, target, "invokes")
            else:
                self.tally["unresolved_call"] += 1
        for child in ast.iter_child_nodes(node):
            self._walk(child, scope)

    def _composed_class(self, value: ast.expr | None, annotation: ast.expr | None, scope: _Scope) -> EntityRef | None:
        if isinstance(value, ast.Call):
            target = self.resolve(value.func, scope)
            if target is not None and target.kind == "class":
                return target
        if annotation is not None:
            target = self.resolve(annotation, scope)
            if target is not None and target.kind == "class":
                return target
        return None

    def _class_composes(self, body: list[ast.stmt], scope: _Scope) -> None:
        for stmt in self._scope_statements(body):
            if isinstance(stmt, ast.Assign):
                target = self._composed_class(stmt.value, None, scope)
            elif isinstance(stmt, ast.AnnAssign):
                target = self._composed_class(stmt.value, stmt.annotation, scope)
            else:
                continue
            if target is not None:
                self._emit(scope.entity, target, "composes")

    def _self_composes(self, body: list[ast.stmt], scope: _Scope) -> None:
        if scope.owner_class is None:
            return
        stack: list[ast.AST] = list(body)
        while stack:
            node = stack.pop()
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef, ast.Lambda)):
                continue
            stack.extend(ast.iter_child_nodes(node))
            if isinstance(node, ast.Assign):
                targets, value, annotation = node.targets, node.value, None
            elif isinstance(node, ast.AnnAssign):
                targets, value, annotation = [node.target], node.value, node.annotation
            else:
                continue
            on_self = any(
                isinstance(t, ast.Attribute) and isinstance(t.value, ast.Name) and t.value.id == scope.self_name
                for t in targets
            )
            if not on_self or scope.self_name is None:
                continue
            # the annotation lives in the method scope, the owner is the class
            target = self._composed_class(value, annotation, scope)
            if target is not None:
                self._emit(scope.owner_class, target, "composes")


def extract_dependencies_with_diagnostics(
    es: EntitySet, files: Iterable[str] | None = None
) -> tuple[list[DepEdge], Counter]:
    """Resolve imports/invokes/inherits/composes for ``files`` (default: all)."""
    modules = ModuleIndex(es.files)
    tally: Counter = Counter()
    edges: list[DepEdge] = []
    targets = es.files if files is None else sorted(set(files))
    for path in targets:
        if path in es.parse_errors or path not in es.source_text:
            continue
        file_entity = es.file_entity(path)
        if file_entity is None:
            continue
        tree = ast.parse(es.source_text[path])
        edges.extend(_FileResolver(es, modules, path, tally).run(tree, file_entity))
    edges.sort(key=_edge_sort_key)
    return edges, tally


def extract_dependencies(es: EntitySet, files: Iterable[str] | None = None) -> list[DepEdge]:
    return extract_dependencies_with_diagnostics(es, files)[0]
