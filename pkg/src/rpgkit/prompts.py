"""Chat payloads for each semantic judgment.

Every reply must carry its answer as JSON inside a ``<solution>`` block.
Both provider backends render these payloads so token accounting is
backend-independent.
"""

from __future__ import annotations

import json

SYSTEM = (
    "You annotate Python repositories for a code navigation index. "
    "Answer with JSON wrapped in <solution></solution> tags and nothing else."
)

PHRASE_RULES = (
    "Phrase rules: lowercase, verb followed by object, at most eight words, "
    "one action per phrase, describe purpose rather than implementation, "
    "no vague fillers such as misc or general."
)

PARSE_HEAD = (
    "Describe what each code entity below does as a list of short feature phrases.\n"
    + PHRASE_RULES
    + "\nReturn one JSON object whose keys are the entity labels exactly as given "
    "(after ###) and whose values are phrase lists. Keep every label, using an "
    "empty list for stubs.\n\n"
)

SUMMARIZE_HEAD = (
    "The phrases below describe the definitions inside one source file. "
    "Condense them into at most eight phrases summarizing the file.\n"
    + PHRASE_RULES
    + "\nReturn a JSON list of phrases.\n\n"
)

DOMAINS_HEAD = (
    "Each line gives a file path and the phrases summarizing it. Propose between "
    "three and twelve functional areas covering the whole repository. Area names "
    "are PascalCase, specific to the domain, and never vague.\n"
    "Return a JSON list of area names.\n\n"
)

PATHS_HEAD = (
    "Place every group below into a path of exactly three segments: "
    "Area/category/subcategory. Area must be one of the listed areas. Category and "
    "subcategory follow the phrase rules. Each group appears exactly once.\n"
    + PHRASE_RULES
    + "\nReturn a JSON object mapping each path to the list of group ids placed there.\n\n"
)

ROUTE_HEAD = (
    "A new code unit must be placed under the most fitting node. Pick the id of the "
    'best candidate, or "none" when no candidate fits better than the current node.\n'
    'Return a JSON object {"choice": <id or "none">}.\n\n'
)

DRIFT_HEAD = (
    "Compare the old and new feature lists of one code unit. Score how far its "
    "purpose moved, from 0 (unchanged) to 1 (unrelated).\n"
    'Return a JSON object {"drift": <number>}.\n\n'
)


def messages(user: str) -> list[dict[str, str]]:
    return [{"role": "system", "content": SYSTEM}, {"role": "user", "content": user}]


def parse_item(label: str, source: str) -> str:
    return f"### {label}\n{source.rstrip()}\n"


def parse_payload(items: list[str]) -> str:
    return PARSE_HEAD + "".join(items)


def summarize_payload(path: str, phrases: list[str]) -> str:
    return SUMMARIZE_HEAD + f"file: {path}\n" + "".join(f"- {p}\n" for p in phrases)


def domains_payload(summaries: list[tuple[str, list[str]]]) -> str:
    return DOMAINS_HEAD + "".join(f"{path}: {'; '.join(ph)}\n" for path, ph in summaries)


def paths_payload(groups: list[tuple[str, list[str]]], areas: list[str]) -> str:
    body = "areas: " + ", ".join(areas) + "\n"
    body += "".join(f"group {gid}: {'; '.join(ph)}\n" for gid, ph in groups)
    return PATHS_HEAD + body


def route_payload(candidates: list[tuple[str, list[str]]], target: list[str]) -> str:
    body = "unit: " + "; ".join(target) + "\n"
    body += "".join(f"candidate {cid}: {'; '.join(ph)}\n" for cid, ph in candidates)
    return ROUTE_HEAD + body


def drift_payload(old: list[str], new: list[str]) -> str:
    return DRIFT_HEAD + "old: " + json.dumps(old) + "\nnew: " + json.dumps(new) + "\n"


def solution(answer: object) -> str:
    return "<solution>\n" + json.dumps(answer, sort_keys=True) + "\n</solution>"
