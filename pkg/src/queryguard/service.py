"""JSON labeling API over a single adaptive run.

One engine, one session. Every handler holds the session lock, so
concurrent clients see a serialized state machine:

    awaiting_labels -> ready_to_advance -> awaiting_labels | finished

POST /api/advance refits the model synchronously; clients should allow a
long request timeout there.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .ingest import ATTACK_CLASSES, BENIGN, MALICIOUS
from .loop import AdaptiveRun, StateError, UnknownQuery

_LABELS = (BENIGN, MALICIOUS)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(engine: AdaptiveRun, static_dir=None) -> FastAPI:
    """Build the API app around an already started engine."""

    app = FastAPI(title="queryguard labeling service")
    lock = threading.Lock()
    session_id = uuid.uuid4().hex

    def _session_payload() -> dict:
        history = [dict(r["metrics"], batch=r["batch"]) for r in engine.reports]
        return {
            "id": session_id,
            "state": engine.state(),
            "current_batch": engine.current_batch(),
            "pending_count": sum(1 for p in engine.pending if p["query_id"] not in engine.labels),
            "metrics_history": history,
        }

    @app.get("/api/session")
    def session():
        with lock:
            return _session_payload()

    @app.get("/api/pending")
    def pending(offset: int = 0, limit: int = 100):
        with lock:
            if offset < 0 or limit < 0:
                return _error(400, "offset and limit must be non-negative")
            items = []
            for entry in engine.pending[offset : offset + limit]:
                submitted = engine.labels.get(entry["query_id"])
                items.append(dict(entry, label=submitted[0] if submitted else None))
            return {"total": len(engine.pending), "offset": offset, "items": items}

    @app.post("/api/labels")
    async def labels(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be a JSON array")
        if not isinstance(body, list):
            return _error(400, "body must be a JSON array")
        for item in body:
            if not isinstance(item, dict) or not isinstance(item.get("query_id"), str):
                return _error(400, "each item needs a string query_id")
            label = item.get("label")
            if label not in _LABELS:
                return _error(400, f"label must be one of {list(_LABELS)}")
            attack_class = item.get("attack_class")
            if attack_class is not None and attack_class not in ATTACK_CLASSES:
                return _error(400, f"attack_class must be one of {list(ATTACK_CLASSES)}")
            if label == BENIGN and attack_class is not None:
                return _error(400, "benign labels cannot carry an attack_class")
        with lock:
            try:
                remaining = engine.submit_labels(body)
            except UnknownQuery as e:
                return _error(404, str(e))
            except StateError as e:
                return _error(409, str(e))
            except ValueError as e:
                return _error(400, str(e))
            return {"accepted": len(body), "remaining": remaining, "state": engine.state()}

    @app.post("/api/advance")
    def advance():
        with lock:
            try:
                report = engine.advance()
            except StateError as e:
                return _error(409, str(e))
            return {"report": report, "session": _session_payload()}

    @app.get("/api/report/{batch}")
    def report(batch: int):
        with lock:
            for r in engine.reports:
                if r["batch"] == batch:
                    return r
            return _error(404, f"no report for batch {batch}")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
