from __future__ import annotations

import json
from pathlib import Path

import pytest

from rpgkit.config import ENV_VAR, Config, ConfigError, load_config, make_provider
from rpgkit.semantic import DeterministicProvider, RemoteProvider


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(ENV_VAR, raising=False)


def test_defaults() -> None:
    cfg = load_config()
    assert cfg == Config()
    assert cfg.evolution_tau_drift == 0.5
    assert cfg.routing_min_similarity == 0.2
    assert "provider.kind" in Config.keys()
    assert cfg.as_dict()["extractor.min_scope_depth"] == 1


def test_key_value_document(tmp_path: Path) -> None:
    path = tmp_path / "rpg.conf"
    path.write_text('# comment\nprovider.feature_source = "docstring"\nevolution.tau_drift = 0.3\n\n')
    cfg = load_config(path)
    assert cfg.provider_feature_source == "docstring"
    assert cfg.evolution_tau_drift == 0.3


def test_nested_json_document(tmp_path: Path) -> None:
    path = tmp_path / "rpg.json"
    path.write_text(json.dumps({"provider": {"workers": 4}, "extractor.min_scope_depth": 2}))
    cfg = load_config(path)
    assert (cfg.provider_workers, cfg.extractor_min_scope_depth) == (4, 2)


def test_env_var_and_override_precedence(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    path = tmp_path / "c.conf"
    path.write_text("provider.retries = 5\nprovider.workers = 2\n")
    monkeypatch.setenv(ENV_VAR, str(path))
    cfg = load_config(overrides={"provider.workers": "7", "provider.model": None})
    assert (cfg.provider_retries, cfg.provider_workers) == (5, 7)


@pytest.mark.parametrize(
    "text",
    ["nope.key = 1\n", "kind = x\n", "provider.retries = many\n", "provider.kind = magic\n", "just words\n", "{bad json"],
)
def test_rejected_documents(tmp_path: Path, text: str) -> None:
    path = tmp_path / "c.conf"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("key, value", [("evolution.tau_drift", "1.5"), ("provider.workers", "0"), ("extractor.min_scope_depth", "-1")])
def test_range_checks(key: str, value: str) -> None:
    with pytest.raises(ConfigError):
        load_config(overrides={key: value})


def test_missing_file() -> None:
    with pytest.raises(ConfigError):
        load_config("/nonexistent/rpg.conf")


def test_make_provider() -> None:
    p = make_provider(load_config(overrides={"provider.feature_source": "docstring"}))
    assert isinstance(p, DeterministicProvider) and p.mode == "docstring"
    with pytest.raises(ConfigError):
        make_provider(load_config(overrides={"provider.kind": "remote"}))
    remote = make_provider(load_config(overrides={"provider.kind": "remote", "provider.endpoint": "http://x", "provider.model": "m"}))
    assert isinstance(remote, RemoteProvider)


def test_glob_lists() -> None:
    cfg = load_config(overrides={"extractor.include": "a/*.py, b/*.py,"})
    assert cfg.include_globs == ["a/*.py", "b/*.py"]
    assert "**/__pycache__/**" in cfg.exclude_globs
