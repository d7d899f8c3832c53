"""FastAPI application implementing the pair/morph wire protocol.

Routes:
    POST /pairs   register a pair; runs the preparation pipeline eagerly
    POST /morph   synthesize at a morph factor (deterministic per session)
    GET  /health  liveness + wrapped model id

Preparation is serialized by a global lock (it owns the compute);
generation is serialized per pair; /health never blocks. Sessions persist
under ``session_dir`` and survive restarts (a re-registered identical pair
reuses its stored session, and identical requests map to the same
pair_id). When the BRIDGE_TOKEN environment variable is set, POST routes
require the matching ``x-bridge-token`` header.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from morphbridge import dsp
from morphbridge.model import MODEL_ID
from morphbridge.sessions import PairSession, pair_fingerprint, prepare_session, resolve_opts


class PairsRequest(BaseModel):
    source_wav_b64: str
    target_wav_b64: str
    init_prompt: str = ""
    opt: dict = Field(default_factory=dict)


class MorphRequest(BaseModel):
    pair_id: str
    alpha: float


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def create_app(session_dir, token: str | None = None) -> FastAPI:
    session_dir = Path(session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="morphbridge", version="0.1.0")

    sessions: dict[str, PairSession] = {}
    prepare_lock = threading.Lock()
    pair_locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def check_token(request: Request):
        if token and request.headers.get("x-bridge-token") != token:
            raise ServiceError(401, "missing or invalid token")

    def get_session(pair_id: str) -> PairSession:
        with registry_lock:
            if pair_id in sessions:
                return sessions[pair_id]
        if not (session_dir / pair_id / "meta.json").exists():
            raise ServiceError(404, f"unknown pair_id: {pair_id}")
        session = PairSession.load(session_dir, pair_id)
        with registry_lock:
            sessions.setdefault(pair_id, session)
            return sessions[pair_id]

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:1])})

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "model_id": MODEL_ID}

    @app.post("/pairs")
    def pairs(body: PairsRequest, request: Request):
        check_token(request)
        try:
            opts = resolve_opts(body.opt)
            x0 = dsp.decode_wav_b64(body.source_wav_b64)
            x1 = dsp.decode_wav_b64(body.target_wav_b64)
        except ValueError as exc:
            raise ServiceError(400, str(exc))
        pair_id = pair_fingerprint(body.source_wav_b64, body.target_wav_b64, body.init_prompt, opts)
        if (session_dir / pair_id / "meta.json").exists():
            return {"pair_id": pair_id}
        with prepare_lock:
            if not (session_dir / pair_id / "meta.json").exists():
                try:
                    session = prepare_session(pair_id, x0, x1, body.init_prompt, opts)
                except ValueError as exc:
                    raise ServiceError(400, str(exc))
                session.save(session_dir)
                with registry_lock:
                    sessions[pair_id] = session
        return {"pair_id": pair_id}

    @app.post("/morph")
    def morph(body: MorphRequest, request: Request):
        check_token(request)
        if not 0.0 <= body.alpha <= 1.0:
            raise ServiceError(400, f"alpha must be in [0, 1], got {body.alpha}")
        session = get_session(body.pair_id)
        with registry_lock:
            lock = pair_locks.setdefault(body.pair_id, threading.Lock())
        with lock:
            samples = session.generate(body.alpha)
        return {"wav_b64": dsp.encode_wav_b64(samples), "sample_rate": dsp.SAMPLE_RATE}

    return app


def run():
    """Console entry point: ``morphbridge [--sessions DIR] [--port N]``."""
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="morphbridge")
    parser.add_argument("--sessions", default="bridge-sessions", help="session storage directory")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8300)
    args = parser.parse_args()
    app = create_app(args.sessions, token=os.environ.get("BRIDGE_TOKEN"))
    uvicorn.run(app, host=args.host, port=args.port)
