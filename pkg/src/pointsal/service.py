"""HTTP annotation service: serves pending label queries for one experiment
and folds human answers back into the run.

The service owns the experiment directory for the lifetime of its session
(one active session per directory). Rounds train in a background thread;
while training, the query list is empty and the status reports the phase.
When every pending query is answered, the round commits and the next round
starts automatically.

Endpoints:
    POST /sessions                              -> create the session
    GET  /sessions/{id}/queries?limit=N         -> JSONL batch of queries
    POST /sessions/{id}/labels                  -> submit one answer
    GET  /sessions/{id}/status                  -> round/budget/pending/metrics
"""

from __future__ import annotations

import base64
import io
import json
import logging
import threading
import time
import uuid

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .engine import (
    STATUS_AWAITING,
    STATUS_COMPLETE,
    Experiment,
    ExperimentLockError,
)
from .labels import BACKGROUND, SALIENT
from .oracle import CLASS_IDS, LabelAnswer

log = logging.getLogger(__name__)

PHASE_TRAINING = "training"
PHASE_AWAITING = "awaiting_labels"
PHASE_COMPLETE = "complete"


class LabelSubmission(BaseModel):
    query_id: str
    label: str  # "salient" | "background"


def render_query_png(image, marker: tuple[int, int], outline, scale: int = 8) -> bytes:
    """Nearest-neighbor upscale with the query point and superpixel boundary
    drawn in, so the client never computes anything itself."""
    import numpy as np
    from PIL import Image, ImageDraw

    arr = (np.clip(image, 0, 1) * 255).astype("uint8")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    img = Image.fromarray(arr, "RGB").resize(
        (arr.shape[1] * scale, arr.shape[0] * scale), Image.NEAREST
    )
    draw = ImageDraw.Draw(img)
    for r, c in outline:
        draw.rectangle([c * scale, r * scale, (c + 1) * scale - 1,
                        (r + 1) * scale - 1], outline=(255, 220, 0))
    r, c = marker
    cx, cy = (c + 0.5) * scale, (r + 0.5) * scale
    draw.line([cx - scale, cy, cx + scale, cy], fill=(255, 40, 40), width=2)
    draw.line([cx, cy - scale, cx, cy + scale], fill=(255, 40, 40), width=2)
    draw.ellipse([cx - scale, cy - scale, cx + scale, cy + scale],
                 outline=(255, 40, 40), width=2)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class SessionHost:
    """Owns the experiment and serializes all mutations behind one lock."""

    def __init__(self, experiment_dir):
        self.experiment_dir = experiment_dir
        self.lock = threading.Lock()
        self.session_id: str | None = None
        self.created_at: float | None = None
        self.exp: Experiment | None = None
        self.phase = PHASE_TRAINING
        self.worker: threading.Thread | None = None
        self.served: set[str] = set()

    # -- lifecycle -----------------------------------------------------------

    def create_session(self) -> dict:
        with self.lock:
            if self.session_id is not None:
                raise HTTPException(409, "a session is already active for this "
                                         "experiment")
            try:
                exp = Experiment.open(self.experiment_dir)
                exp._acquire_lock()
            except ExperimentLockError as err:
                raise HTTPException(409, str(err)) from None
            self.exp = exp
            self.session_id = uuid.uuid4().hex
            self.created_at = time.time()
            if exp.state.status == STATUS_AWAITING:
                self.phase = PHASE_AWAITING
            elif exp.state.status == STATUS_COMPLETE:
                self.phase = PHASE_COMPLETE
            else:
                self._start_worker_locked()
            return self._status_locked()

    def _start_worker_locked(self):
        self.phase = PHASE_TRAINING

        def run():
            try:
                self.exp.run(oracle="external")
            except Exception:
                log.exception("background round failed")
            with self.lock:
                self.phase = (PHASE_COMPLETE
                              if self.exp.state.status == STATUS_COMPLETE
                              else PHASE_AWAITING)

        self.worker = threading.Thread(target=run, daemon=True)
        self.worker.start()

    def close(self):
        with self.lock:
            if self.exp is not None:
                self.exp.close()
                self.exp = None
            self.session_id = None

    # -- request handlers ------------------------------------------------------

    def _require_session(self, session_id: str):
        if self.session_id is None or session_id != self.session_id:
            raise HTTPException(404, f"unknown session {session_id!r}")

    def fetch_queries(self, session_id: str, limit: int) -> list[dict]:
        with self.lock:
            self._require_session(session_id)
            if self.phase != PHASE_AWAITING:
                return []
            st = self.exp.state
            batch = [q for q in st.pending_queries
                     if q.query_id not in st.pending_answers][:limit]
            out = []
            for q in batch:
                image = self.exp._image(q.image_id)
                part = self.exp._partition(q.image_id)
                outline = part.boundary_pixels(q.superpixel_id)
                png = render_query_png(image, (q.row, q.col), outline)
                record = q.to_dict()
                record["marker"] = {"row": q.row, "col": q.col}
                record["outline"] = [[r, c] for r, c in outline]
                record["png_base64"] = base64.b64encode(png).decode()
                out.append(record)
                self.served.add(q.query_id)
            return out

    def submit_label(self, session_id: str, submission: LabelSubmission) -> dict:
        if submission.label not in CLASS_IDS:
            raise HTTPException(422, f"label must be one of {sorted(CLASS_IDS)}")
        with self.lock:
            self._require_session(session_id)
            if self.phase != PHASE_AWAITING:
                raise HTTPException(409, "no labels are pending")
            answer = LabelAnswer(submission.query_id, CLASS_IDS[submission.label],
                                 "human")
            try:
                remaining = self.exp.submit_answer(answer)
            except KeyError as err:
                raise HTTPException(404, str(err)) from None
            except ValueError as err:
                raise HTTPException(409, str(err)) from None
            if remaining == 0:
                self.exp.commit_pending()
                self._start_worker_locked()
            return {"ok": True, "remaining": remaining}

    def status(self, session_id: str) -> dict:
        with self.lock:
            self._require_session(session_id)
            return self._status_locked()

    def _status_locked(self) -> dict:
        st = self.exp.state
        pending = [q for q in st.pending_queries
                   if q.query_id not in st.pending_answers]
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "experiment": str(self.experiment_dir),
            "phase": self.phase,
            "round": st.round,
            "budget_spent": st.budget_spent,
            "target_budget": st.target_budget,
            "pending": len(pending),
            "answered": len(st.pending_answers),
            "metric_history": st.metric_history,
        }


def create_app(experiment_dir) -> FastAPI:
    from contextlib import asynccontextmanager

    host = SessionHost(experiment_dir)

    @asynccontextmanager
    async def lifespan(app):
        try:
            yield
        finally:
            host.close()

    app = FastAPI(title="pointsal annotation service", lifespan=lifespan)
    app.state.host = host

    @app.post("/sessions")
    def create_session():
        return host.create_session()

    @app.get("/sessions/{session_id}/queries", response_class=PlainTextResponse)
    def fetch_queries(session_id: str, limit: int = 32):
        records = host.fetch_queries(session_id, limit)
        body = "\n".join(json.dumps(r, sort_keys=True) for r in records)
        return PlainTextResponse(content=body,
                                 media_type="application/x-ndjson")

    @app.post("/sessions/{session_id}/labels")
    def submit_label(session_id: str, submission: LabelSubmission):
        return host.submit_label(session_id, submission)

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        return host.status(session_id)

    return app
