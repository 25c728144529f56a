"""Path helpers shared across modules: glob matching and directory normalization."""

from __future__ import annotations

import functools
import posixpath
import re


def normalize_dir(path: str) -> str:
    """Return a canonical relative directory path ("" is the repository root).

    Rejects absolute paths and any ``.``/``..`` segment.
    """
    if path.startswith("/") or re.match(r"^[A-Za-z]:[\\/]", path):
        raise ValueError(f"absolute path not allowed: {path!r}")
    parts = [p for p in path.replace("\\", "/").split("/") if p != ""]
    for part in parts:
        if part in (".", ".."):
            raise ValueError(f"path escapes or is not normalized: {path!r}")
    return "/".join(parts)


def dir_of(path: str) -> str:
    return posixpath.dirname(path)


def is_path_prefix(prefix: str, path: str) -> bool:
    """Segment-wise prefix test; the root "" is a prefix of everything."""
    if prefix == "":
        return True
    return path == prefix or path.startswith(prefix + "/")


def check_glob(pattern: str) -> None:
    if not pattern:
        raise ValueError("empty glob pattern")
    depth = 0
    for ch in pattern:
        if ch == "[":
            depth += 1
        elif ch == "]" and depth:
            depth -= 1
    if depth:
        raise ValueError(f"unbalanced '[' in glob {pattern!r}")


@functools.lru_cache(maxsize=256)
def _glob_regex(pattern: str) -> re.Pattern[str]:
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if pattern.startswith("**/", i):
            out.append("(?:.*/)?")
            i += 3
            continue
        if pattern.startswith("**", i):
            out.append(".*")
            i += 2
            continue
        if ch == "*":
            out.append("[^/]*")
        elif ch == "?":
            out.append("[^/]")
        elif ch == "[":
            end = pattern.find("]", i + 1)
            if end == -1:
                out.append(re.escape(ch))
            else:
                body = pattern[i + 1 : end]
                if body.startswith("!"):
                    body = "^" + body[1:]
                out.append("[" + body + "]")
                i = end
        else:
            out.append(re.escape(ch))
        i += 1
    return re.compile("".join(out) + r"\Z")


def match_glob(path: str, pattern: str) -> bool:
    """Match a relative posix path against a glob where ``**`` spans directories."""
    return _glob_regex(pattern).match(path) is not None


def is_glob(text: str) -> bool:
    return any(ch in text for ch in "*?[")
