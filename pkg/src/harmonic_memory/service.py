"""HTTP JSON service over an ``Engine``.

Routes: ``POST /ingest``, ``POST /query``, ``GET /entries/{id}``, ``GET /stats``.
Errors come back as ``{"error": code, "message": text}``.
"""

from __future__ import annotations

import json
import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from .engine import Engine, dumps, source_from_dict
from .errors import EngineError, NotFoundError, ProviderError, StoreBusyError, ValidationError

logger = logging.getLogger(__name__)


def _json(body: object, status: int = 200) -> Response:
    # serialized the same way as the CLI's --json output
    return Response(dumps(body), status_code=status, media_type="application/json")


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": code, "message": message}, status_code=status)


async def _body(request: Request) -> dict:
    raw = await request.body()
    try:
        body = json.loads(raw or b"null")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _BadRequest("bad_request", f"malformed JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise _BadRequest("bad_request", "request body must be a JSON object")
    return body


class _BadRequest(Exception):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="harmonic-memory")

    @app.exception_handler(_BadRequest)
    async def _bad_request(request: Request, exc: _BadRequest):
        return _error(400, exc.code, exc.message)

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(StoreBusyError)
    async def _busy(request: Request, exc: StoreBusyError):
        return _error(503, "store_busy", str(exc))

    @app.exception_handler(ProviderError)
    async def _provider(request: Request, exc: ProviderError):
        return _error(502, "provider_error", str(exc))

    @app.exception_handler(ValidationError)
    async def _invalid(request: Request, exc: ValidationError):
        return _error(400, "invalid", str(exc))

    @app.exception_handler(EngineError)
    async def _engine(request: Request, exc: EngineError):
        logger.exception("unhandled engine error")
        return _error(500, "internal", str(exc))

    # engine calls run in the threadpool; the store lock serializes writers against readers

    @app.post("/ingest")
    async def ingest(request: Request):
        body = await _body(request)
        source = source_from_dict(body.get("source"))
        report = await run_in_threadpool(engine.ingest, source)
        return _json(report.to_dict())

    @app.post("/query")
    async def query(request: Request):
        body = await _body(request)
        q = body.get("q")
        mode = body.get("mode", "semantic")
        if mode not in ("semantic", "policy"):
            return _error(400, "bad_mode", f"unknown mode {mode!r}; expected semantic or policy")
        if not isinstance(q, str):
            return _error(400, "bad_request", "field 'q' must be a string")
        out = await run_in_threadpool(engine.query_dict, q, mode, body.get("overrides"))
        return _json(out)

    @app.get("/entries/{entry_id}")
    def get_entry(entry_id: str):
        return _json(engine.entry(entry_id))

    @app.get("/stats")
    def stats():
        return _json(engine.stats())

    return app
