"""Configuration. Later sources win: defaults < config document < command line overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from rpgkit.semantic import DeterministicProvider, ProviderSettings, RemoteProvider, SemanticProvider, TokenAccount

ENV_VAR = "RPG_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    provider_kind: str = "deterministic"
    provider_endpoint: str = ""
    provider_model: str = ""
    provider_api_key_env: str = "RPG_API_KEY"
    provider_max_payload_tokens: int = 12000
    provider_retries: int = 3
    provider_workers: int = 1
    provider_feature_source: str = "name"
    evolution_tau_drift: float = 0.5
    routing_min_similarity: float = 0.2
    extractor_min_scope_depth: int = 1
    extractor_include: str = "**/*.py"
    extractor_exclude: str = ".*/**,**/.*/**,**/__pycache__/**"
    store_graph: str = "rpg.json"
    store_diagnostics: str = "rpg.diagnostics.jsonl"

    @staticmethod
    def keys() -> list[str]:
        return [f.name.replace("_", ".", 1) for f in fields(Config)]

    def set(self, key: str, raw: object) -> None:
        attr = key.replace(".", "_", 1)
        field = {f.name: f for f in fields(self)}.get(attr)
        if field is None or "." not in key:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, attr)
        try:
            if isinstance(current, bool):
                value: object = str(raw).lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = str(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        setattr(self, attr, value)
        self.check()

    def check(self) -> None:
        if self.provider_kind not in ("deterministic", "remote"):
            raise ConfigError(f"provider.kind must be deterministic or remote, not {self.provider_kind!r}")
        if self.provider_feature_source not in ("name", "docstring"):
            raise ConfigError("provider.feature_source must be name or docstring")
        if self.provider_max_payload_tokens < 1 or self.provider_retries < 1 or self.provider_workers < 1:
            raise ConfigError("provider limits must be positive")
        if not 0.0 <= self.evolution_tau_drift <= 1.0:
            raise ConfigError("evolution.tau_drift must lie in [0, 1]")
        if not 0.0 <= self.routing_min_similarity <= 1.0:
            raise ConfigError("routing.min_similarity must lie in [0, 1]")
        if self.extractor_min_scope_depth < 0:
            raise ConfigError("extractor.min_scope_depth must be >= 0")

    def as_dict(self) -> dict:
        return {key: getattr(self, key.replace(".", "_", 1)) for key in self.keys()}

    @property
    def include_globs(self) -> list[str]:
        return [g.strip() for g in self.extractor_include.split(",") if g.strip()]

    @property
    def exclude_globs(self) -> list[str]:
        return [g.strip() for g in self.extractor_exclude.split(",") if g.strip()]


def parse_document(text: str) -> dict[str, str]:
    """JSON (flat dotted keys or nested objects) or ``key = value`` lines."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config line {exc.lineno}: {exc.msg}") from exc
        out: dict[str, str] = {}

        def flatten(prefix: str, obj: object) -> None:
            if isinstance(obj, dict):
                for k, v in obj.items():
                    flatten(f"{prefix}.{k}" if prefix else k, v)
            else:
                out[prefix] = obj  # type: ignore[assignment]

        flatten("", doc)
        return out
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value.strip('"').strip("'")
    return out


def load_config(path: str | os.PathLike | None = None, overrides: dict[str, object] | None = None) -> Config:
    """Defaults, then the file (explicit path or ``$RPG_CONFIG``), then overrides."""
    cfg = Config()
    source = path if path is not None else os.environ.get(ENV_VAR)
    if source:
        p = Path(source)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        for key, value in parse_document(p.read_text(encoding="utf-8")).items():
            cfg.set(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, value)
    cfg.check()
    return cfg


def make_provider(cfg: Config, account: TokenAccount | None = None) -> SemanticProvider:
    settings = ProviderSettings(
        max_payload_tokens=cfg.provider_max_payload_tokens,
        retries=cfg.provider_retries,
        min_similarity=cfg.routing_min_similarity,
        workers=cfg.provider_workers,
    )
    if cfg.provider_kind == "remote":
        if not cfg.provider_endpoint or not cfg.provider_model:
            raise ConfigError("remote provider needs provider.endpoint and provider.model")
        return RemoteProvider(
            cfg.provider_endpoint,
            cfg.provider_model,
            settings,
            account,
            api_key=os.environ.get(cfg.provider_api_key_env),
        )
    return DeterministicProvider(settings, account, mode=cfg.provider_feature_source)
