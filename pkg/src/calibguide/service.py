"""REST front end for guided capture sessions.

Routes (JSON in, JSON out):

* ``POST /sessions`` create a session from rig + board config -> 201 with id
* ``GET /sessions/{id}`` full state snapshot
* ``POST /sessions/{id}/captures`` add a view (simulated pose or raw pixels)
* ``POST /sessions/{id}/suggest`` plan the next placement
* ``GET /sessions/{id}/events`` incremental event fetch, long-polling when
  ``wait`` (seconds) is given; ``GET /sessions/{id}/events/stream`` is the
  same feed as server-sent events.

Failures map to ``{"code": ..., "message": ...}`` with a stable code per
error class.  Sessions persist as one JSON-lines event log per id under
``CALIBGUIDE_DATA_DIR`` (in-memory only when unset) and are lazily
rehydrated by replay on first access.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path as FsPath

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .errors import (
    CalibrationError,
    ConstraintUnsatisfiable,
    DegenerateRays,
    DivergedOptimization,
    InsufficientViews,
    InvalidConfig,
    NoFeasibleCandidate,
    NotVisible,
    SessionNotFound,
    SingularInformation,
)
from .geometry import BoardSpec, Pose, StereoRig
from .planner import SearchConfig
from .session import SessionState

_ERROR_MAP: list[tuple[type, str, int]] = [
    (NotVisible, "NOT_VISIBLE", 422),
    (InsufficientViews, "INSUFFICIENT_VIEWS", 409),
    (SessionNotFound, "SESSION_NOT_FOUND", 404),
    (InvalidConfig, "INVALID_CONFIG", 422),
    (NoFeasibleCandidate, "NO_FEASIBLE_CANDIDATE", 409),
    (ConstraintUnsatisfiable, "CONSTRAINT_UNSATISFIABLE", 409),
    (SingularInformation, "SINGULAR_INFORMATION", 409),
    (DegenerateRays, "DEGENERATE_RAYS", 409),
    (DivergedOptimization, "DIVERGED_OPTIMIZATION", 500),
]


def error_payload(exc: CalibrationError) -> tuple[dict, int]:
    for cls, code, status in _ERROR_MAP:
        if isinstance(exc, cls):
            return {"code": code, "message": str(exc)}, status
    return {"code": "CALIBRATION_ERROR", "message": str(exc)}, 500


class _Runtime:
    """One session plus its lock and change notification."""

    def __init__(self, state: SessionState):
        self.state = state
        self.lock = threading.RLock()
        self.changed = threading.Condition(self.lock)

    def notify(self) -> None:
        self.changed.notify_all()


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="calibguide guidance service")
    sessions: dict[str, _Runtime] = {}
    registry_lock = threading.Lock()
    if data_dir is None:
        data_dir = os.environ.get("CALIBGUIDE_DATA_DIR") or None
    root = FsPath(data_dir) if data_dir else None
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)

    def _log_path(sid: str) -> FsPath | None:
        return None if root is None else root / f"{sid}.jsonl"

    def _persist_new_events(rt: _Runtime, start: int) -> None:
        path = _log_path(rt.state.session_id)
        if path is None:
            return
        with path.open("a", encoding="utf-8") as fh:
            for event in rt.state.events[start:]:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _get_runtime(sid: str) -> _Runtime:
        with registry_lock:
            rt = sessions.get(sid)
            if rt is not None:
                return rt
            path = _log_path(sid)
            if path is None or not path.exists():
                raise SessionNotFound(f"no session {sid!r}")
            events = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
            rt = _Runtime(SessionState.replay(events))
            sessions[sid] = rt
            return rt

    @app.exception_handler(CalibrationError)
    async def _calibration_error(request: Request, exc: CalibrationError):
        payload, status = error_payload(exc)
        return JSONResponse(payload, status_code=status)

    @app.post("/sessions", status_code=201)
    def create_session(body: dict) -> dict:
        try:
            rig = StereoRig.from_dict(body["rig"])
            board = BoardSpec.from_dict(body["board"])
        except KeyError as exc:
            raise InvalidConfig(f"missing required field {exc.args[0]!r}") from exc
        search = (
            SearchConfig.from_dict(body["search"]) if "search" in body else None
        )
        sid = uuid.uuid4().hex
        state = SessionState.create(
            session_id=sid,
            rig=rig,
            board=board,
            mode=body.get("mode", "guided"),
            seed=body.get("seed", 0),
            sigma_px=body.get("sigma_px", 0.5),
            kernel=body.get("kernel", "identity"),
            search=search,
        )
        rt = _Runtime(state)
        with registry_lock:
            sessions[sid] = rt
        _persist_new_events(rt, 0)
        return {"id": sid, "state": state.to_dict()}

    @app.get("/sessions/{sid}")
    def get_state(sid: str) -> dict:
        rt = _get_runtime(sid)
        with rt.lock:
            return rt.state.to_dict()

    @app.post("/sessions/{sid}/captures")
    def post_capture(sid: str, body: dict) -> dict:
        rt = _get_runtime(sid)
        with rt.lock:
            start = len(rt.state.events)
            pose = Pose.from_dict(body["pose"]) if body.get("pose") is not None else None
            pixels = None
            if body.get("view") is not None:
                view = body["view"]
                try:
                    pixels = (view["left_pixels"], view["right_pixels"])
                except KeyError as exc:
                    raise InvalidConfig(
                        f"view needs left_pixels and right_pixels, missing {exc.args[0]!r}"
                    ) from exc
            summary = rt.state.capture(pose=pose, pixels=pixels, sigma=body.get("sigma"))
            _persist_new_events(rt, start)
            rt.notify()
            return {"seq": rt.state.events[-1]["seq"], **summary}

    @app.post("/sessions/{sid}/suggest")
    def post_suggest(sid: str, body: dict | None = None) -> dict:
        rt = _get_runtime(sid)
        with rt.lock:
            start = len(rt.state.events)
            cand, overlay = rt.state.suggest()
            _persist_new_events(rt, start)
            rt.notify()
            return {
                "seq": rt.state.events[-1]["seq"],
                "pose": cand.pose.to_dict(),
                "trace": cand.trace,
                "visible": cand.visible,
                "overlay": overlay,
            }

    @app.get("/sessions/{sid}/events")
    def get_events(sid: str, after: int = 0, wait: float = 0.0) -> dict:
        """Events with seq >= after; blocks up to ``wait`` seconds for news."""
        rt = _get_runtime(sid)
        deadline = wait
        with rt.lock:
            if wait > 0.0 and len(rt.state.events) <= after:
                rt.changed.wait(timeout=deadline)
            events = rt.state.events[after:]
            return {"events": events, "next": len(rt.state.events)}

    @app.get("/sessions/{sid}/events/stream")
    def stream_events(sid: str, after: int = 0):
        """The same event feed as server-sent events (one JSON per data line)."""
        rt = _get_runtime(sid)

        def generate():
            cursor = after
            while True:
                with rt.lock:
                    if len(rt.state.events) <= cursor:
                        rt.changed.wait(timeout=15.0)
                    chunk = rt.state.events[cursor:]
                    cursor = len(rt.state.events)
                if not chunk:
                    yield ": keepalive\n\n"
                    continue
                for event in chunk:
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app


def main(port: int | None = None, data_dir: str | None = None) -> None:
    """Run the service under uvicorn; used by the command line."""
    import uvicorn

    if port is None:
        port = int(os.environ.get("CALIBGUIDE_PORT", "8000"))
    uvicorn.run(create_app(data_dir=data_dir), host="127.0.0.1", port=port)
