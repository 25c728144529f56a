"""Semantic judgments behind one interface, with an offline and a remote backend.

The deterministic backend replaces model calls with fixed rules so the whole
pipeline is reproducible without a network. It still renders the payload a
remote call would send and records its size, so token costs compare across
backends.
"""

from __future__ import annotations

import ast
import contextlib
import json
import math
import re
import textwrap
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Sequence, TypeVar

import httpx

from rpgkit import prompts
from rpgkit.codeindex import EntityRef

T = TypeVar("T", bound=Hashable)

MAX_WORDS = 8
REJECT_WORDS = 12

_PUNCT = re.compile(r"[^\w\s]|_")
_PASCAL = re.compile(r"^[A-Z][A-Za-z0-9]*$")
_SOLUTION = re.compile(r"<solution>(.*?)</solution>", re.S)


class FeatureRejected(ValueError):
    pass


class BatchError(ValueError):
    pass


class ProviderError(RuntimeError):
    """Provider stage failure; ``partial`` holds results gathered before it."""

    def __init__(self, stage: str, message: str, partial: object = None) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial


class MalformedReply(ValueError):
    pass


# --------------------------------------------------------------------------
# phrases


def normalize_feature(raw: str) -> str:
    words = _PUNCT.sub(" ", raw.lower()).split()
    if not words:
        raise FeatureRejected(f"empty phrase: {raw!r}")
    if len(words) > REJECT_WORDS:
        raise FeatureRejected(f"phrase has {len(words)} words: {raw!r}")
    return " ".join(words[:MAX_WORDS])


def normalize_phrases(raws: Iterable[str]) -> list[str]:
    """Normalize, drop rejected phrases and deduplicate, keeping first occurrence."""
    out: list[str] = []
    for raw in raws:
        if not isinstance(raw, str):
            continue
        try:
            phrase = normalize_feature(raw)
        except FeatureRejected:
            continue
        if phrase not in out:
            out.append(phrase)
    return out


def token_set(phrases: Iterable[str]) -> set[str]:
    return {tok for p in phrases for tok in p.split()}


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """Token-level Jaccard of two phrase lists; two empty lists count as identical."""
    ta, tb = token_set(a), token_set(b)
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def top_phrases(lists: Iterable[Iterable[str]], k: int = MAX_WORDS) -> list[str]:
    """The k most frequent phrases, ties broken lexicographically."""
    counts = Counter(p for ph in lists for p in ph)
    return [p for p, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")

VERBS = {
    "get": "retrieve",
    "fetch": "retrieve",
    "is": "check",
    "has": "check",
    "can": "check",
    "set": "update",
    "init": "initialize",
    "calc": "calculate",
    "make": "create",
    "new": "create",
    "del": "delete",
    "rm": "remove",
}


def split_identifier(name: str) -> list[str]:
    return [w.lower() for part in name.split("_") for w in _CAMEL.findall(part)]


def name_phrase(name: str) -> list[str]:
    words = split_identifier(name)
    if not words:
        return []
    words[0] = VERBS.get(words[0], words[0])
    return normalize_phrases([" ".join(" ".join(words).split()[:MAX_WORDS])])


def pascal_case(text: str) -> str:
    return "".join(w.capitalize() for w in split_identifier(text))


def docstring_of(source: str) -> str | None:
    text = textwrap.dedent(source)
    for attempt in (text, text.rstrip() + "\n    pass\n"):
        try:
            tree = ast.parse(attempt)
        except SyntaxError:
            continue
        body = tree.body
        if body and isinstance(body[0], (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            return ast.get_docstring(body[0])
        return ast.get_docstring(tree)
    return None


# --------------------------------------------------------------------------
# budget and accounting


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class ProviderBudget:
    max_payload_tokens: int = 12000

    def estimate(self, text: str) -> int:
        return estimate_tokens(text)


def make_batches(items: Sequence[tuple[T, int]], budget: ProviderBudget | int) -> list[list[T]]:
    """Greedy first-fit of ``(item, size)`` pairs in the given order."""
    cap = budget if isinstance(budget, int) else budget.max_payload_tokens
    batches: list[list[T]] = []
    loads: list[int] = []
    for item, size in items:
        if size > cap:
            raise BatchError(f"item {item!r} needs {size} tokens, budget is {cap}")
        for i, load in enumerate(loads):
            if load + size <= cap:
                batches[i].append(item)
                loads[i] += size
                break
        else:
            batches.append([item])
            loads.append(size)
    return batches


@dataclass
class StageUsage:
    request_count: int = 0
    prompt_tokens_est: int = 0
    completion_tokens_est: int = 0

    @property
    def total(self) -> int:
        return self.prompt_tokens_est + self.completion_tokens_est

    def __sub__(self, other: "StageUsage") -> "StageUsage":
        return StageUsage(
            self.request_count - other.request_count,
            self.prompt_tokens_est - other.prompt_tokens_est,
            self.completion_tokens_est - other.completion_tokens_est,
        )

    def as_dict(self) -> dict:
        return {
            "request_count": self.request_count,
            "prompt_tokens_est": self.prompt_tokens_est,
            "completion_tokens_est": self.completion_tokens_est,
        }


@dataclass
class PayloadRecord:
    stage: str
    op: str
    text: str


class TokenAccount:
    """Per-stage usage counters, safe to update from worker threads."""

    def __init__(self, keep_payloads: bool = False) -> None:
        self._lock = threading.Lock()
        self._stages: dict[str, StageUsage] = {}
        self.keep_payloads = keep_payloads
        self.payloads: list[PayloadRecord] = []

    def record(self, stage: str, op: str, prompt: str, completion: str) -> None:
        with self._lock:
            usage = self._stages.setdefault(stage, StageUsage())
            usage.request_count += 1
            usage.prompt_tokens_est += estimate_tokens(prompt)
            usage.completion_tokens_est += estimate_tokens(completion)
            if self.keep_payloads:
                self.payloads.append(PayloadRecord(stage, op, prompt))

    def snapshot(self) -> dict[str, StageUsage]:
        with self._lock:
            return {k: StageUsage(**v.as_dict()) for k, v in self._stages.items()}

    def reset(self, stage: str) -> None:
        with self._lock:
            self._stages.pop(stage, None)

    def usage(self, stage: str) -> StageUsage:
        with self._lock:
            return StageUsage(**self._stages.get(stage, StageUsage()).as_dict())

    def total(self) -> StageUsage:
        out = StageUsage()
        for u in self.snapshot().values():
            out.request_count += u.request_count
            out.prompt_tokens_est += u.prompt_tokens_est
            out.completion_tokens_est += u.completion_tokens_est
        return out


def usage_delta(before: dict[str, StageUsage], after: dict[str, StageUsage]) -> dict[str, StageUsage]:
    return {k: v - before.get(k, StageUsage()) for k, v in after.items() if v != before.get(k)}


# --------------------------------------------------------------------------
# provider interface


@dataclass
class GroupSummary:
    group_id: str
    members: list[str]
    phrases: list[str]
    label: str = ""

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"group {self.group_id!r} has no members")


@dataclass
class ProviderSettings:
    max_payload_tokens: int = 12000
    retries: int = 3
    min_similarity: float = 0.2
    workers: int = 1


class SemanticProvider:
    """Base class: payload rendering, batching, accounting and retries."""

    kind = "abstract"

    def __init__(self, settings: ProviderSettings | None = None, account: TokenAccount | None = None) -> None:
        self.settings = settings or ProviderSettings()
        self.budget = ProviderBudget(self.settings.max_payload_tokens)
        self.account = account or TokenAccount()
        self.diagnostics: list[dict] = []
        self._stage = "default"
        self._diag_lock = threading.Lock()

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        prev, self._stage = self._stage, name
        try:
            yield
        finally:
            self._stage = prev

    def _diag(self, **entry: object) -> None:
        with self._diag_lock:
            self.diagnostics.append({"stage": self._stage, **entry})

    # -- batching -----------------------------------------------------------

    def item_capacity(self) -> int:
        head = prompts.SYSTEM + prompts.parse_payload([])
        return self.budget.max_payload_tokens - estimate_tokens(head)

    def plan_batches(self, batch: Sequence[tuple[EntityRef, str]]) -> list[list[tuple[EntityRef, str]]]:
        sized = [((ref, src), estimate_tokens(prompts.parse_item(str(ref), src))) for ref, src in batch]
        return make_batches(sized, self.item_capacity())

    def parse_many(self, items: Sequence[tuple[EntityRef, str]]) -> dict[EntityRef, list[str]]:
        batches = self.plan_batches(items)
        if self.settings.workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(self.settings.workers) as pool:
                results = list(pool.map(self.parse_features, batches))
        else:
            results = [self.parse_features(b) for b in batches]
        merged: dict[EntityRef, list[str]] = {}
        for res in results:
            merged.update(res)
        # canonical order independent of completion order
        return {ref: merged[ref] for ref, _ in items}

    # -- operations ---------------------------------------------------------

    def parse_features(self, batch: Sequence[tuple[EntityRef, str]]) -> dict[EntityRef, list[str]]:
        raise NotImplementedError

    def summarize_file(self, path: str, child_phrases: list[list[str]]) -> list[str]:
        raise NotImplementedError

    def discover_domains(self, file_summaries: Sequence[tuple[str, list[str]]]) -> list[str]:
        raise NotImplementedError

    def assign_paths(self, groups: Sequence[GroupSummary], areas: Sequence[str]) -> dict[str, list[str]]:
        raise NotImplementedError

    def route(self, candidates: Sequence[tuple[str, list[str]]], target: list[str]) -> str | None:
        raise NotImplementedError

    def judge_drift(self, old: list[str], new: list[str]) -> float:
        raise NotImplementedError

    # -- shared rules -------------------------------------------------------

    def _fallback_path(self, group: GroupSummary, areas: Sequence[str]) -> str:
        """Most token-similar area; category and subcategory from the group's phrases."""
        label_tokens = split_identifier(group.label or group.group_id.rsplit("/", 1)[-1])
        scored = sorted(
            areas, key=lambda a: (-jaccard([" ".join(split_identifier(a))], group.phrases + [" ".join(label_tokens)]), a)
        )
        return f"{scored[0]}/{_segment_pair(group)}"

    def _check_areas(self, areas: Sequence[str]) -> None:
        if not areas:
            raise ValueError("no areas to assign to")


def _segment_pair(group: GroupSummary) -> str:
    fill = normalize_phrases([" ".join(split_identifier(group.label or group.group_id))]) or ["repository root"]
    phrases = list(group.phrases) + fill + fill
    return f"{phrases[0]}/{phrases[1]}"


class DeterministicProvider(SemanticProvider):
    """Rule-based stand-in for a language model.

    ``mode="name"`` derives phrases from identifiers; ``mode="docstring"`` reads
    the first docstring line (``;`` separates phrases) and falls back to names.
    """

    kind = "deterministic"

    def __init__(self, settings: ProviderSettings | None = None, account: TokenAccount | None = None, mode: str = "name") -> None:
        super().__init__(settings, account)
        if mode not in ("name", "docstring"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode

    def features_for(self, ref: EntityRef, source: str) -> list[str]:
        if self.mode == "docstring":
            doc = docstring_of(source)
            if doc:
                phrases = normalize_phrases(doc.strip().splitlines()[0].split(";"))
                if phrases:
                    return phrases
        name = ref.qualified_name.rsplit(".", 1)[-1] if ref.qualified_name else ref.path.rsplit("/", 1)[-1].removesuffix(".py")
        return name_phrase(name)

    def parse_features(self, batch: Sequence[tuple[EntityRef, str]]) -> dict[EntityRef, list[str]]:
        if not batch:
            return {}
        out = {ref: self.features_for(ref, src) for ref, src in batch}
        payload = prompts.parse_payload([prompts.parse_item(str(r), s) for r, s in batch])
        self.account.record(self._stage, "parse", prompts.SYSTEM + payload, prompts.solution({str(r): v for r, v in out.items()}))
        return out

    def summarize_file(self, path: str, child_phrases: list[list[str]]) -> list[str]:
        out = top_phrases(child_phrases)
        if child_phrases:
            flat = [p for ph in child_phrases for p in ph]
            self.account.record(self._stage, "summarize", prompts.SYSTEM + prompts.summarize_payload(path, flat), prompts.solution(out))
        return out

    def discover_domains(self, file_summaries: Sequence[tuple[str, list[str]]]) -> list[str]:
        if not file_summaries:
            raise ValueError("nothing to organize")
        from rpgkit.extractor import group_files

        groups = group_files([p for p, _ in file_summaries])
        sizes = Counter(label for _, label in groups.values())
        labels = sorted(sizes, key=lambda lb: (-sizes[lb], lb))[:12]
        out = sorted(labels)
        self.account.record(self._stage, "domains", prompts.SYSTEM + prompts.domains_payload(list(file_summaries)), prompts.solution(out))
        return out

    def assign_paths(self, groups: Sequence[GroupSummary], areas: Sequence[str]) -> dict[str, list[str]]:
        self._check_areas(areas)
        out: dict[str, list[str]] = {}
        for group in groups:
            if group.label in areas:
                path = f"{group.label}/{_segment_pair(group)}"
            else:
                path = self._fallback_path(group, areas)
            out.setdefault(path, []).append(group.group_id)
        payload = prompts.paths_payload([(g.group_id, g.phrases) for g in groups], list(areas))
        self.account.record(self._stage, "paths", prompts.SYSTEM + payload, prompts.solution(out))
        return out

    def route(self, candidates: Sequence[tuple[str, list[str]]], target: list[str]) -> str | None:
        if not candidates:
            raise ValueError("route needs at least one candidate")
        best = min(candidates, key=lambda c: (-jaccard(c[1], target), c[0]))
        choice = best[0] if jaccard(best[1], target) >= self.settings.min_similarity else None
        self.account.record(
            self._stage, "route", prompts.SYSTEM + prompts.route_payload(list(candidates), target), prompts.solution({"choice": choice or "none"})
        )
        return choice

    def judge_drift(self, old: list[str], new: list[str]) -> float:
        score = 1.0 - jaccard(old, new)
        self.account.record(self._stage, "drift", prompts.SYSTEM + prompts.drift_payload(old, new), prompts.solution({"drift": score}))
        return score


class RemoteProvider(SemanticProvider):
    """Chat-completion backend: POSTs ``{model, messages}`` and reads ``<solution>``."""

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        settings: ProviderSettings | None = None,
        account: TokenAccount | None = None,
        client: httpx.Client | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
    ) -> None:
        super().__init__(settings, account)
        self.endpoint = endpoint
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)

    def _post(self, op: str, user: str) -> str:
        body = {"model": self.model, "messages": prompts.messages(user)}
        last: Exception | None = None
        for _ in range(max(1, self.settings.retries)):
            try:
                resp = self.client.post(self.endpoint, json=body)
                resp.raise_for_status()
                data = resp.json()
                content = data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
                continue
            self.account.record(self._stage, op, prompts.SYSTEM + user, content)
            return content
        raise ProviderError(self._stage, f"{op} request failed: {last}")

    def _ask(self, op: str, user: str, check: Callable[[object], object]) -> object:
        """Query until ``check`` accepts the parsed solution; None after all attempts."""
        for _ in range(max(1, self.settings.retries)):
            content = self._post(op, user)
            match = _SOLUTION.search(content)
            if not match:
                continue
            try:
                return check(json.loads(match.group(1)))
            except (ValueError, MalformedReply, TypeError, KeyError):
                continue
        self._diag(op=op, issue="malformed reply after retries")
        return None

    def parse_features(self, batch: Sequence[tuple[EntityRef, str]]) -> dict[EntityRef, list[str]]:
        if not batch:
            return {}
        labels = {str(ref): ref for ref, _ in batch}
        payload = prompts.parse_payload([prompts.parse_item(str(r), s) for r, s in batch])

        def check(obj: object) -> dict:
            if not isinstance(obj, dict) or not all(isinstance(v, list) for v in obj.values()):
                raise MalformedReply("expected an object of lists")
            return obj

        try:
            reply = self._ask("parse", payload, check)
        except ProviderError as exc:
            exc.partial = {}
            raise
        out: dict[EntityRef, list[str]] = {}
        for label, ref in labels.items():
            if reply is None or label not in reply:
                self._diag(op="parse", entity=label, issue="missing from reply")
                out[ref] = []
            else:
                out[ref] = normalize_phrases(reply[label])
        return out

    def summarize_file(self, path: str, child_phrases: list[list[str]]) -> list[str]:
        flat = [p for ph in child_phrases for p in ph]
        if not flat:
            return []

        def check(obj: object) -> list:
            if not isinstance(obj, list):
                raise MalformedReply("expected a list")
            return obj

        reply = self._ask("summarize", prompts.summarize_payload(path, flat), check)
        if reply is None:
            return top_phrases(child_phrases)
        return normalize_phrases(reply)[:MAX_WORDS]

    def discover_domains(self, file_summaries: Sequence[tuple[str, list[str]]]) -> list[str]:
        if not file_summaries:
            raise ValueError("nothing to organize")

        def check(obj: object) -> list[str]:
            if not isinstance(obj, list):
                raise MalformedReply("expected a list")
            names = list(dict.fromkeys(str(x) for x in obj))
            if not 3 <= len(names) <= 12 or not all(_PASCAL.match(n) for n in names):
                raise MalformedReply("need 3-12 PascalCase names")
            return names

        reply = self._ask("domains", prompts.domains_payload(list(file_summaries)), check)
        if reply is None:
            from rpgkit.extractor import group_files

            return sorted({label for _, label in group_files([p for p, _ in file_summaries]).values()})
        return reply

    def assign_paths(self, groups: Sequence[GroupSummary], areas: Sequence[str]) -> dict[str, list[str]]:
        self._check_areas(areas)
        ids = {g.group_id for g in groups}

        def check(obj: object) -> dict[str, list[str]]:
            if not isinstance(obj, dict):
                raise MalformedReply("expected an object")
            out: dict[str, list[str]] = {}
            for raw_path, members in obj.items():
                parts = str(raw_path).split("/")
                if len(parts) != 3 or parts[0] not in areas or not isinstance(members, list):
                    raise MalformedReply(f"bad path {raw_path!r}")
                segs = [normalize_feature(p) for p in parts[1:]]
                path = "/".join([parts[0]] + segs)
                out.setdefault(path, []).extend(m for m in members if m in ids)
            return out

        reply = self._ask("paths", prompts.paths_payload([(g.group_id, g.phrases) for g in groups], list(areas)), check) or {}
        seen: set[str] = set()
        result: dict[str, list[str]] = {}
        for path in sorted(reply):
            for gid in reply[path]:
                if gid not in seen:
                    seen.add(gid)
                    result.setdefault(path, []).append(gid)
        for group in groups:
            if group.group_id not in seen:
                self._diag(op="paths", group=group.group_id, issue="fallback path")
                result.setdefault(self._fallback_path(group, areas), []).append(group.group_id)
        return result

    def route(self, candidates: Sequence[tuple[str, list[str]]], target: list[str]) -> str | None:
        if not candidates:
            raise ValueError("route needs at least one candidate")
        ids = {c for c, _ in candidates}

        def check(obj: object) -> str | None:
            choice = obj.get("choice") if isinstance(obj, dict) else None
            if choice == "none":
                return None
            if choice not in ids:
                raise MalformedReply("unknown candidate")
            return choice

        return self._ask("route", prompts.route_payload(list(candidates), target), check)

    def judge_drift(self, old: list[str], new: list[str]) -> float:
        def check(obj: object) -> float:
            value = float(obj["drift"]) if isinstance(obj, dict) else float(obj)
            if math.isnan(value):
                raise MalformedReply("nan")
            return min(1.0, max(0.0, value))

        reply = self._ask("drift", prompts.drift_payload(old, new), check)
        return 1.0 - jaccard(old, new) if reply is None else reply
