"""Localization scoring: canonical keys, Acc@k, precision and recall."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

GRANULARITIES = ("file", "function")
INIT_SUFFIX = ".__init__"


class EvalError(ValueError):
    pass


def canonicalize(path: str, entity: str | None = None, granularity: str = "function") -> str:
    if not path:
        raise EvalError("empty path")
    if granularity not in GRANULARITIES:
        raise EvalError(f"unknown granularity {granularity!r}")
    if granularity == "file":
        return path
    if not entity:
        raise EvalError(f"function granularity needs an entity for {path!r}")
    if entity.endswith(INIT_SUFFIX) and len(entity) > len(INIT_SUFFIX):
        entity = entity[: -len(INIT_SUFFIX)]
    return f"{path}:{entity}"


def canonicalize_key(key: str, granularity: str) -> str:
    """Canonical form of a ``path`` or ``path:Qual`` string."""
    path, _, entity = key.partition(":")
    if granularity == "file":
        return canonicalize(path, None, "file")
    return canonicalize(path, entity or None, "function")


def dedup(items: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(items))


@dataclass
class LocalizationInstance:
    gold: list[str]
    predictions: list[str]
    granularity: str = "function"
    instance_id: str = ""

    def __post_init__(self) -> None:
        self.gold = dedup(self.gold)
        self.predictions = dedup(self.predictions)

    def hits(self) -> list[int]:
        gold = set(self.gold)
        return [1 if p in gold else 0 for p in self.predictions]


def acc_at_k(instances: Sequence[LocalizationInstance], k: int) -> float:
    if k < 1:
        raise EvalError("k must be >= 1")
    if not instances:
        raise EvalError("no instances to score")
    return sum(1 for inst in instances if any(inst.hits()[:k])) / len(instances)


def precision(instances: Sequence[LocalizationInstance]) -> float:
    if not instances:
        return 0.0
    total = 0.0
    for inst in instances:
        h = inst.hits()
        # an empty prediction list counts as zero precision
        total += sum(h) / len(h) if h else 0.0
    return total / len(instances)


def recall(instances: Sequence[LocalizationInstance]) -> float:
    if not instances:
        return 0.0
    total = 0.0
    for inst in instances:
        total += sum(inst.hits()) / len(inst.gold) if inst.gold else 0.0
    return total / len(instances)


@dataclass
class RunReport:
    acc_at_1: float
    acc_at_5: float
    precision: float
    recall: float
    n: int
    unmatched: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "Acc@1": self.acc_at_1,
            "Acc@5": self.acc_at_5,
            "precision": self.precision,
            "recall": self.recall,
            "n": self.n,
            "unmatched": self.unmatched,
            "warnings": self.warnings,
        }

    def table(self) -> str:
        rows = [("Acc@1", self.acc_at_1), ("Acc@5", self.acc_at_5), ("precision", self.precision), ("recall", self.recall)]
        lines = [f"{name:<10} {value:.4f}" for name, value in rows]
        lines.append(f"{'n':<10} {self.n}")
        return "\n".join(lines)


def _load(path: str | Path, field_name: str) -> dict[str, list[str]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EvalError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise EvalError(f"{path}: expected a JSON array of instances")
    out: dict[str, list[str]] = {}
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict) or "instance_id" not in rec:
            raise EvalError(f"{path}[{i}]: missing instance_id")
        items = rec.get(field_name, [])
        if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
            raise EvalError(f"{path}[{i}]: {field_name} must be a list of strings")
        out[str(rec["instance_id"])] = items
    return out


def score_instances(instances: Sequence[LocalizationInstance]) -> RunReport:
    return RunReport(acc_at_k(instances, 1), acc_at_k(instances, 5), precision(instances), recall(instances), len(instances))


def score_run(gold_file: str | Path, pred_file: str | Path, granularity: str = "function", top_n: int | None = None) -> RunReport:
    gold = _load(gold_file, "gold")
    preds = _load(pred_file, "predictions")
    warnings = []
    # gold instances without predictions score zero; predictions without gold are dropped
    missing = sorted(set(gold) - set(preds))
    extra = sorted(set(preds) - set(gold))
    if missing:
        warnings.append(f"{len(missing)} gold instances have no predictions and score zero")
    if extra:
        warnings.append(f"{len(extra)} predicted instances have no gold entry and were excluded")
    unmatched = sorted(missing + extra)
    ids = sorted(gold)
    if not ids:
        raise EvalError("gold file has no instances")
    instances = []
    for iid in ids:
        g = [canonicalize_key(x, granularity) for x in gold[iid]]
        p = dedup(canonicalize_key(x, granularity) for x in preds.get(iid, []))
        if top_n is not None:
            p = p[:top_n]
        instances.append(LocalizationInstance(g, p, granularity, iid))
    report = score_instances(instances)
    report.unmatched = unmatched
    report.warnings = warnings
    return report
