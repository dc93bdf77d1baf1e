"""HTTP service exposing answering, retrieval and stored traces."""

from __future__ import annotations

import json
import logging
import threading
import uuid
from collections import OrderedDict
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .pipeline import PipelineConfig, PipelineDeps, PipelineError, PipelineTrace, run

logger = logging.getLogger(__name__)


class TraceStore:
    """Bounded in-memory ring of traces, optionally appended to a JSONL spill file."""

    def __init__(self, capacity: int = 1000, spill_path: str | Path | None = None) -> None:
        self.capacity = capacity
        self.spill_path = Path(spill_path) if spill_path else None
        self._items: OrderedDict[str, dict[str, Any]] = OrderedDict()
        self._lock = threading.Lock()

    def put(self, trace: PipelineTrace) -> str:
        trace_id = uuid.uuid4().hex
        record = trace.to_dict()
        with self._lock:
            self._items[trace_id] = record
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
            if self.spill_path:
                with open(self.spill_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"trace_id": trace_id, **record}, ensure_ascii=False) + "\n")
        return trace_id

    def get(self, trace_id: str) -> dict[str, Any] | None:
        with self._lock:
            return self._items.get(trace_id)

    def __len__(self) -> int:
        return len(self._items)


class ServiceState:
    def __init__(self, cfg: PipelineConfig | None = None, deps: PipelineDeps | None = None,
                 traces: TraceStore | None = None) -> None:
        self.cfg = cfg
        self.deps = deps
        self.traces = traces or TraceStore()
        self.ready = cfg is not None and deps is not None
        self.load_error: str | None = None

    def load(self, loader: Callable[[], tuple[PipelineConfig, PipelineDeps]]) -> None:
        try:
            self.cfg, self.deps = loader()
        except Exception as exc:  # surfaced through /healthz
            logger.exception("service state failed to load")
            self.load_error = str(exc)
            return
        self.ready = True


class Question(BaseModel):
    question: str = Field(min_length=1)


def create_app(
    state: ServiceState | None = None,
    loader: Callable[[], tuple[PipelineConfig, PipelineDeps]] | None = None,
) -> FastAPI:
    """Build the app. With ``loader``, state loads in a background thread at startup."""
    state = state or ServiceState()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if loader is not None and not state.ready:
            threading.Thread(target=state.load, args=(loader,), daemon=True).start()
        yield

    app = FastAPI(title="hykge", lifespan=lifespan)
    app.state.service = state

    def _require_ready() -> None:
        if not state.ready:
            raise HTTPException(status_code=503, detail="service is loading")

    def _run(question: str, answer: bool) -> PipelineTrace:
        _require_ready()
        if not question.strip():
            raise HTTPException(status_code=422, detail="question must be non-empty")
        try:
            return run(question, state.cfg, state.deps, answer=answer)
        except PipelineError as exc:
            raise _ProviderFailure(exc) from exc

    @app.exception_handler(_ProviderFailure)
    async def _provider_failure(request, exc: _ProviderFailure):
        return JSONResponse(status_code=502, content={"detail": str(exc.error), "stage": exc.error.stage})

    @app.get("/healthz")
    def healthz():
        if not state.ready:
            return JSONResponse(status_code=503, content={"status": "loading", "error": state.load_error})
        return {"status": "ok"}

    @app.post("/v1/answer")
    def answer(body: Question):
        trace = _run(body.question, answer=True)
        return {"answer": trace.answer, "trace_id": state.traces.put(trace)}

    @app.post("/v1/retrieve")
    def retrieve(body: Question):
        trace = _run(body.question, answer=False)
        return {
            "chains": [
                {"text": c["text"], "score": c["score"], "kind": c["kind"], "hops": c["hops"]}
                for c in trace.pruned
            ],
            "anchors": trace.anchors,
        }

    @app.get("/v1/trace/{trace_id}")
    def get_trace(trace_id: str):
        _require_ready()
        record = state.traces.get(trace_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown trace id")
        return record

    return app


class _ProviderFailure(Exception):
    def __init__(self, error: PipelineError):
        super().__init__(str(error))
        self.error = error
