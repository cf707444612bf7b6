"""HTTP service: search, snippet lookup, health, relevance feedback, and
static serving of the browser UI."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .encoders import EmptyQuery
from .engine import SearchEngine

log = logging.getLogger(__name__)


class EngineHandle:
    """Versioned, atomically swappable reference to the live engine."""

    def __init__(self, engine: SearchEngine | None = None):
        self._lock = threading.Lock()
        self._engine = engine
        self._version = 0 if engine is None else 1

    def get(self) -> SearchEngine | None:
        with self._lock:
            return self._engine

    def swap(self, engine: SearchEngine) -> int:
        with self._lock:
            self._engine = engine
            self._version += 1
            return self._version

    @property
    def version(self) -> int:
        with self._lock:
            return self._version


@dataclass
class FeedbackLog:
    path: str

    def __post_init__(self):
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class SearchRequest(BaseModel):
    query: str
    k: int = Field(default=10, ge=1, le=1000)


class FeedbackRequest(BaseModel):
    query_id: str
    snippet_id: str
    relevant: bool
    session: str = ""


def create_app(
    handle: EngineHandle,
    feedback_log: FeedbackLog | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="vfgsearch", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/api/health")
    def health():
        engine = handle.get()
        if engine is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {
            "status": "ok",
            "index_size": len(engine.index),
            "index_version": handle.version,
        }

    @app.post("/api/search")
    def search(req: SearchRequest):
        engine = handle.get()
        if engine is None:
            return JSONResponse(status_code=503, content={"detail": "index loading"})
        if not req.query.strip():
            return JSONResponse(status_code=422, content={"detail": "empty query"})
        try:
            hits = engine.search(req.query, k=req.k)
        except EmptyQuery:
            return JSONResponse(status_code=422, content={"detail": "empty query"})
        results = []
        for hit in hits:
            meta = engine.index.metadata.get(hit["id"], {})
            results.append(
                {
                    "id": hit["id"],
                    "rank": hit["rank"],
                    "score": hit["score"],
                    "code_text": meta.get("code_text", ""),
                }
            )
        log.info("search k=%d query=%r -> %d results", req.k, req.query, len(results))
        return {"results": results}

    @app.get("/api/snippet/{snippet_id}")
    def snippet(snippet_id: str):
        engine = handle.get()
        if engine is None:
            return JSONResponse(status_code=503, content={"detail": "index loading"})
        meta = engine.index.metadata.get(snippet_id)
        if meta is None:
            return JSONResponse(status_code=404, content={"detail": "unknown snippet"})
        return {"id": snippet_id, **meta}

    @app.post("/api/feedback", status_code=204)
    def feedback(req: FeedbackRequest):
        if feedback_log is None:
            return JSONResponse(status_code=503, content={"detail": "no feedback log"})
        feedback_log.append(
            {
                "time": time.time(),
                "query_id": req.query_id,
                "snippet_id": req.snippet_id,
                "relevant": req.relevant,
                "session": req.session,
            }
        )
        return Response(status_code=204)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(engine: SearchEngine, bind: str, feedback_path: str, static_dir: str | None = None):
    """Run the service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    handle = EngineHandle(engine)
    app = create_app(handle, FeedbackLog(feedback_path), static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="info")
