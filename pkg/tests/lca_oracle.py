"""Independent oracles for directory-scope grounding.

``exhaustive_scopes`` searches covering antichains directly: every input must
have exactly one chosen ancestor-or-self, no chosen scope may contain another,
and scopes shallower than the minimum depth are allowed only when they are
inputs themselves. The optimum has the fewest scopes, then the deepest ones.
"""

from __future__ import annotations

import random


def _norm(p: str) -> str:
    return "/".join(s for s in p.split("/") if s and s != ".")


def depth(p: str) -> int:
    return 0 if p == "" else p.count("/") + 1


def is_prefix(a: str, b: str) -> bool:
    return a == "" or a == b or b.startswith(a + "/")


def prefixes(p: str) -> list[str]:
    segs = p.split("/") if p else []
    return ["/".join(segs[:i]) for i in range(len(segs) + 1)]


def exhaustive_scopes(paths, min_scope_depth: int = 1) -> set[str]:
    inputs = sorted({_norm(p) for p in paths})
    if not inputs:
        return set()
    input_set = set(inputs)

    def allowed(s: str) -> bool:
        return depth(s) >= min_scope_depth or s in input_set

    def covers(s: str) -> frozenset[str]:
        return frozenset(q for q in inputs if is_prefix(s, q))

    found: list[tuple[str, ...]] = []

    def dfs(chosen: list[str], uncovered: frozenset[str], k: int) -> None:
        if not uncovered:
            found.append(tuple(sorted(chosen)))
            return
        if len(chosen) == k:
            return
        p = min(uncovered)
        options: dict[frozenset[str], str] = {}
        for s in prefixes(p):
            if not allowed(s) or any(is_prefix(s, c) or is_prefix(c, s) for c in chosen):
                continue
            cov = covers(s)
            # same coverage: only the deepest candidate can be optimal
            if cov not in options or depth(s) > depth(options[cov]):
                options[cov] = s
        for cov, s in options.items():
            dfs(chosen + [s], uncovered - cov, k)

    for k in range(1, len(inputs) + 1):
        dfs([], frozenset(inputs), k)
        if found:
            best = max(sum(depth(s) for s in sol) for sol in found)
            winners = {sol for sol in found if sum(depth(s) for s in sol) == best}
            assert len(winners) == 1, winners
            return set(winners.pop())
    raise AssertionError("no covering antichain")


def prefix_scopes(paths, min_scope_depth: int = 1) -> set[str]:
    """Closed form: eligible prefixes with no eligible proper prefix."""
    inputs = {_norm(p) for p in paths}
    pool = {q for p in inputs for q in prefixes(p)}

    def eligible(q: str) -> bool:
        if q in inputs:
            return True
        nxt = {p[len(q):].lstrip("/").split("/")[0] for p in inputs if is_prefix(q, p) and p != q}
        return depth(q) >= min_scope_depth and len(nxt) >= 2

    good = {q for q in pool if eligible(q)}
    return {q for q in good if not any(o != q and is_prefix(o, q) for o in good)}


def random_paths(rng: random.Random, max_paths: int = 20, max_depth: int = 6) -> set[str]:
    segs = ["a", "b", "c", "d", "e"][: rng.randint(2, 5)]
    out = set()
    for _ in range(rng.randint(0, max_paths)):
        d = rng.randint(0, max_depth)
        out.add("/".join(rng.choice(segs) for _ in range(d)))
    return out
