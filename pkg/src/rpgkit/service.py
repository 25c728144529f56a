"""HTTP front end for the query tools.

Request bodies are validated by pydantic models that mirror the tool parameter
lists and forbid extra keys. The graph snapshot can be reloaded from disk
without restarting the process.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Any, Callable, Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from rpgkit.graph import RpgFormatError, load
from rpgkit.toolkit import Toolkit


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SearchNodeParams(_Strict):
    mode: Literal["features", "snippets", "auto"]
    feature_terms: Optional[list[Any]] = None
    search_scopes: Optional[list[Any]] = None
    search_terms: Optional[list[Any]] = None
    line_nums: Optional[list[int]] = None
    file_path_or_pattern: str = "**/*.py"


class FetchNodeParams(_Strict):
    code_entities: Optional[list[Any]] = None
    feature_entities: Optional[list[Any]] = None


class ExploreRPGParams(_Strict):
    start_code_entities: Optional[list[Any]] = None
    start_feature_entities: Optional[list[Any]] = None
    direction: Literal["upstream", "downstream", "both"] = "downstream"
    traversal_depth: int = 2
    entity_type_filter: Optional[list[str]] = None
    dependency_type_filter: Optional[list[str]] = None


class ToolRequest(_Strict):
    tool_name: Literal["SearchNode", "FetchNode", "ExploreRPG"]
    parameters: dict[str, Any] = Field(default_factory=dict)


class ToolResponse(BaseModel):
    tool_name: str
    ok: bool
    result: dict[str, Any]
    warnings: list[str]
    error: Optional[str] = None


class Health(BaseModel):
    status: str
    version: int
    nodes: int


class _Snapshot:
    def __init__(self, loader: Callable[[], Toolkit]) -> None:
        self._loader = loader
        self._lock = threading.Lock()
        self._toolkit = loader()

    def get(self) -> Toolkit:
        with self._lock:
            return self._toolkit

    def reload(self) -> Toolkit:
        fresh = self._loader()
        with self._lock:
            self._toolkit = fresh
        return fresh


def create_app(
    graph_path: str | Path | None = None,
    repo_root: str | Path | None = None,
    toolkit: Toolkit | None = None,
    min_similarity: float = 0.2,
) -> FastAPI:
    if toolkit is None and graph_path is None:
        raise ValueError("create_app needs a graph path or a toolkit")

    def loader() -> Toolkit:
        if graph_path is None:
            assert toolkit is not None
            return toolkit
        return Toolkit(load(graph_path), repo_root, min_similarity)

    snap = _Snapshot(loader)
    app = FastAPI(title="rpgkit", version="1")

    def run(name: str, params: BaseModel) -> ToolResponse:
        res = snap.get().dispatch({"tool_name": name, "parameters": params.model_dump(exclude_unset=True)})
        return ToolResponse(**res.as_dict())

    @app.get("/health", response_model=Health)
    def health() -> Health:
        g = snap.get().g
        return Health(status="ok", version=g.version, nodes=len(g.nodes))

    @app.post("/reload", response_model=Health)
    def reload() -> Health:
        try:
            g = snap.reload().g
        except (OSError, RpgFormatError) as exc:
            raise HTTPException(status_code=500, detail=f"reload failed: {exc}") from exc
        return Health(status="reloaded", version=g.version, nodes=len(g.nodes))

    @app.post("/tools/SearchNode", response_model=ToolResponse)
    def search_node(params: SearchNodeParams) -> ToolResponse:
        return run("SearchNode", params)

    @app.post("/tools/FetchNode", response_model=ToolResponse)
    def fetch_node(params: FetchNodeParams) -> ToolResponse:
        return run("FetchNode", params)

    @app.post("/tools/ExploreRPG", response_model=ToolResponse)
    def explore_rpg(params: ExploreRPGParams) -> ToolResponse:
        return run("ExploreRPG", params)

    @app.post("/query", response_model=ToolResponse)
    def query(req: ToolRequest) -> ToolResponse:
        res = snap.get().dispatch(req.model_dump())
        return ToolResponse(**res.as_dict())

    return app
