"""HTTP service backing the trimap studio.

Sessions live in memory: upload an image once, then post trimaps to get
alpha mattes and backgrounds to get composites. Errors use a JSON envelope
{code, message}. CORS is open so the browser studio can talk to the
service from any origin.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .data import composite, fit_background
from .decoder import MattingModel
from .exceptions import CorruptImage, InvalidTrimapValue, MattingError
from .inference import GRID_SAMPLE, NORMAL, infer_alpha
from .planes import (
    Plane,
    encode_gray_png,
    encode_image_png,
    image_from_bytes,
    trimap_from_bytes,
)

DEFAULT_TTL_SECONDS = 30 * 60
DEFAULT_MAX_SESSIONS = 64
DEFAULT_MAX_PIXELS = 4096 * 4096


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    image: Plane
    created_at: float
    last_used: float
    trimap: Plane | None = None
    alpha: Plane | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """TTL-evicting in-memory map; oldest sessions fall out at the cap."""

    def __init__(self, ttl_seconds: float, max_sessions: int):
        self.ttl = ttl_seconds
        self.cap = max_sessions
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def _evict(self, now: float) -> None:
        dead = [sid for sid, s in self._sessions.items()
                if now - s.last_used > self.ttl]
        for sid in dead:
            del self._sessions[sid]
        while len(self._sessions) >= self.cap:
            oldest = min(self._sessions.values(), key=lambda s: s.last_used)
            del self._sessions[oldest.id]

    def create(self, image: Plane) -> Session:
        now = time.time()
        session = Session(id=uuid.uuid4().hex, image=image,
                          created_at=now, last_used=now)
        with self._lock:
            self._evict(now)
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        now = time.time()
        with self._lock:
            self._evict(now)
            session = self._sessions.get(session_id)
            if session is None:
                raise ApiError(404, "unknown_session",
                               f"no session {session_id!r}")
            session.last_used = now
            return session

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def create_app(model: MattingModel, max_pixels: int = DEFAULT_MAX_PIXELS,
               ttl_seconds: float = DEFAULT_TTL_SECONDS,
               max_sessions: int = DEFAULT_MAX_SESSIONS) -> FastAPI:
    app = FastAPI(title="trimatte service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"], expose_headers=["X-Elapsed-Ms", "X-Strategy"],
    )
    store = SessionStore(ttl_seconds, max_sessions)
    app.state.store = store
    model.eval()

    @app.exception_handler(ApiError)
    async def _api_error(_req, exc: ApiError):
        return JSONResponse({"code": exc.code, "message": exc.message},
                            status_code=exc.status)

    @app.exception_handler(MattingError)
    async def _matting_error(_req, exc: MattingError):
        return JSONResponse({"code": "internal", "message": str(exc)},
                            status_code=500)

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        if not body:
            raise ApiError(415, "bad_image", "empty request body")
        try:
            image = image_from_bytes(body)
        except CorruptImage as exc:
            raise ApiError(415, "bad_image", str(exc))
        if image.height * image.width > max_pixels:
            raise ApiError(413, "too_large",
                           f"image exceeds {max_pixels} pixels")
        session = store.create(image)
        return JSONResponse(
            {"session_id": session.id, "width": image.width,
             "height": image.height},
            status_code=201,
        )

    @app.post("/sessions/{session_id}/matte")
    async def matte(session_id: str, request: Request,
                    strategy: str = "normal"):
        if strategy not in ("normal", "grid"):
            raise ApiError(422, "bad_strategy",
                           f"strategy must be normal or grid, got {strategy!r}")
        session = store.get(session_id)
        body = await request.body()
        try:
            trimap = trimap_from_bytes(body)
        except CorruptImage as exc:
            raise ApiError(415, "bad_image", str(exc))
        except InvalidTrimapValue as exc:
            raise ApiError(422, "bad_trimap", str(exc))
        with session.lock:
            if (trimap.height, trimap.width) != (session.image.height,
                                                 session.image.width):
                raise ApiError(
                    422, "dims_mismatch",
                    f"trimap {trimap.height}x{trimap.width} vs image "
                    f"{session.image.height}x{session.image.width}")
            mode = GRID_SAMPLE if strategy == "grid" else NORMAL
            start = time.perf_counter()
            alpha = infer_alpha(model, session.image, trimap, mode)
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            session.trimap = trimap
            session.alpha = alpha
            png = encode_gray_png(alpha)
        return Response(png, media_type="image/png", headers={
            "X-Elapsed-Ms": f"{elapsed_ms:.1f}",
            "X-Strategy": strategy,
        })

    @app.post("/sessions/{session_id}/composite")
    async def composite_endpoint(session_id: str, request: Request):
        session = store.get(session_id)
        body = await request.body()
        try:
            background = image_from_bytes(body)
        except CorruptImage as exc:
            raise ApiError(415, "bad_image", str(exc))
        with session.lock:
            if session.alpha is None:
                raise ApiError(409, "no_alpha",
                               "request a matte before compositing")
            fitted = fit_background(background, session.image.height,
                                    session.image.width)
            blend = composite(session.image, fitted, session.alpha)
            png = encode_image_png(blend)
        return Response(png, media_type="image/png")

    return app


def load_app(checkpoint_path, **kwargs) -> FastAPI:
    from .checkpoint import load_model

    model, _, _ = load_model(checkpoint_path)
    return create_app(model, **kwargs)
