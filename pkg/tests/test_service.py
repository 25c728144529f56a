from __future__ import annotations

import shutil
import warnings
from pathlib import Path

import pytest

from conftest import MINI_SKLEARN
from rpgkit.extractor import build
from rpgkit.graph import save

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from rpgkit.service import create_app


@pytest.fixture
def graph_file(tmp_path: Path) -> Path:
    path = tmp_path / "rpg.json"
    save(build(MINI_SKLEARN), path)
    return path


@pytest.fixture
def client(graph_file: Path) -> TestClient:
    return TestClient(create_app(graph_file, MINI_SKLEARN))


def test_health(client: TestClient) -> None:
    body = client.get("/health").json()
    assert body["status"] == "ok" and body["nodes"] > 0


def test_search_endpoint(client: TestClient) -> None:
    resp = client.post("/tools/SearchNode", json={"mode": "features", "feature_terms": ["r 2 score"]})
    body = resp.json()
    assert resp.status_code == 200 and body["ok"]
    assert body["result"]["feature_hits"][0]["entity"].endswith("r2_score")


def test_fetch_and_explore_endpoints(client: TestClient) -> None:
    fetched = client.post("/tools/FetchNode", json={"code_entities": ["sklearn/metrics/regression.py:r2_score"]}).json()
    assert fetched["ok"] and fetched["result"]["entities"]
    explored = client.post(
        "/tools/ExploreRPG",
        json={"start_code_entities": ["sklearn/base.py:clone"], "direction": "both", "traversal_depth": 1},
    ).json()
    assert explored["ok"] and explored["result"]["edges"]


def test_query_envelope_matches_direct_endpoint(client: TestClient) -> None:
    params = {"mode": "snippets", "search_terms": ["def clone"]}
    direct = client.post("/tools/SearchNode", json=params).json()
    wrapped = client.post("/query", json={"tool_name": "SearchNode", "parameters": params}).json()
    assert direct == wrapped


def test_unknown_keys_are_rejected(client: TestClient) -> None:
    assert client.post("/tools/FetchNode", json={"code_entities": [], "bogus": 1}).status_code == 422
    assert client.post("/query", json={"tool_name": "Nope", "parameters": {}}).status_code == 422
    assert client.post("/tools/ExploreRPG", json={"direction": "sideways"}).status_code == 422


def test_reload_picks_up_new_snapshot(tmp_path: Path, graph_file: Path) -> None:
    client = TestClient(create_app(graph_file, MINI_SKLEARN))
    before = client.get("/health").json()["nodes"]
    repo = tmp_path / "repo"
    shutil.copytree(MINI_SKLEARN, repo)
    (repo / "sklearn" / "extra.py").write_text("def brand_new_helper():\n    pass\n")
    save(build(repo), graph_file)
    after = client.post("/reload").json()
    assert after["status"] == "reloaded" and after["nodes"] > before


def test_reload_failure_keeps_old_snapshot(graph_file: Path) -> None:
    client = TestClient(create_app(graph_file, MINI_SKLEARN))
    nodes = client.get("/health").json()["nodes"]
    graph_file.write_text("{broken")
    assert client.post("/reload").status_code == 500
    assert client.get("/health").json()["nodes"] == nodes


def test_needs_a_graph() -> None:
    with pytest.raises(ValueError):
        create_app()
