"""HTTP API over a MemoryEngine.

Handlers are plain (sync) functions, so FastAPI runs them on its thread pool
and the engine's per-owner locks provide write serialization.
"""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager
from typing import Any

from fastapi import FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig, build_engine
from .engine import EngineUnavailable, MemoryEngine
from .extraction import ExtractorError
from .model import MalformedLine, parse_ts
from .store import NotFound
from .vectors import EmbedderError

log = logging.getLogger(__name__)


class MessagesBody(BaseModel):
    session_id: str = Field(min_length=1)
    lines: list[str]


class SearchBody(BaseModel):
    query: str
    k: int = 10
    include_historical: bool | None = None
    session_id: str | None = None
    now: str | None = None  # "YYYY-MM-DDTHH:MM:SSZ"; defaults to the server clock
    timings: bool = False


class RecallBody(BaseModel):
    query: str
    k: int = 10


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse({"error": code, "detail": detail}, status_code=status)


def create_app(engine: MemoryEngine) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        engine.close()

    app = FastAPI(title="recallkit", version="0.1.0", lifespan=lifespan)
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error(400, "invalid_request", str(exc.errors()))

    @app.exception_handler(EngineUnavailable)
    async def _unavailable(request: Request, exc: EngineUnavailable) -> JSONResponse:
        return _error(503, "engine_unavailable", str(exc))

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {"status": "ok"}

    @app.post("/v1/{owner}/messages")
    def post_messages(owner: str, body: MessagesBody, idempotency_key: str | None = Header(default=None)):
        try:
            records = engine.ingest_messages(owner, body.session_id, body.lines, idempotency_key)
        except MalformedLine as exc:
            return _error(400, "malformed_line", str(exc))
        except EmbedderError as exc:
            return _error(502, "embedder_failed", str(exc))
        return {"message_ids": [m.id for m in records]}

    @app.post("/v1/{owner}/process")
    def post_process(owner: str, idempotency_key: str | None = Header(default=None)):
        try:
            summary = engine.process_pending(owner, idempotency_key)
        except ExtractorError as exc:
            return _error(502, "extractor_failed", str(exc))
        except EmbedderError as exc:
            return _error(502, "embedder_failed", str(exc))
        return summary.to_dict()

    @app.post("/v1/{owner}/search")
    def post_search(owner: str, body: SearchBody):
        if body.k < 1:
            return _error(400, "invalid_request", "k must be >= 1")
        try:
            now = parse_ts(body.now) if body.now else None
            result = engine.search(
                owner,
                body.query,
                body.k,
                now=now,
                include_historical=body.include_historical,
                session_id=body.session_id,
            )
        except EmbedderError as exc:
            return _error(502, "embedder_failed", str(exc))
        except ValueError as exc:
            return _error(400, "invalid_request", str(exc))
        return result.to_dict(include_timings=body.timings)

    @app.get("/v1/{owner}/memories/{memory_id}/history")
    def get_history(owner: str, memory_id: str):
        try:
            chain = engine.history(owner, memory_id)
        except NotFound:
            return _error(404, "not_found", memory_id)
        return {"memory_id": memory_id, "versions": [r.to_dict() for r in chain]}

    @app.get("/v1/{owner}/memories")
    def list_memories(owner: str, current_only: bool = False):
        recs = engine.memories(owner)
        if current_only:
            recs = [r for r in recs if r.is_current]
        return {"memories": [r.to_dict() for r in recs]}

    @app.post("/v1/{owner}/recall")
    def post_recall(owner: str, body: RecallBody):
        if body.k < 1:
            return _error(400, "invalid_request", "k must be >= 1")
        hits = engine.immediate_recall(owner, body.query, body.k)
        return {"messages": [dict(m.to_dict(), similarity=sim) for m, sim in hits]}

    return app


def app_from_config(cfg: ServiceConfig) -> FastAPI:
    return create_app(build_engine(cfg))


def serve(cfg: ServiceConfig) -> None:
    import uvicorn

    app = app_from_config(cfg)
    log.info("serving on %s:%d (data_dir=%s)", cfg.host, cfg.port, cfg.data_dir)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
