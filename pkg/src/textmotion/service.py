"""Session-based HTTP service for interactive character steering.

One session holds the simulated state and executed history between segments;
segments run strictly one at a time per session (concurrent submits get 409)
while distinct sessions proceed independently.  Model parameters are only
ever read.  Frames on the wire are arrays of D numbers in canonical state
order.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import pipeline


class SegmentBody(BaseModel):
    instruction: str = Field(min_length=1)
    waypoint: tuple[float, float] | None = None
    seed: int | None = None


class _SessionEntry:
    def __init__(self, bundle):
        self.session = pipeline.Session(bundle)
        self.lock = threading.Lock()
        self.segments = []
        self.counter = 0


def _meta(bundle, plan_cfg):
    model = bundle.model
    links = []
    for k, link in enumerate(model.links):
        joint = k - 1
        links.append({
            "name": link.name or f"link{k}",
            "parent": -1 if k == 0 else model.joints[joint].parent,
            "joint": -1 if k == 0 else joint,
            "attach": [0.0, 0.0] if k == 0 else list(model.joints[joint].offset),
            "tip": list(link.tip_offset),
        })
    from .motiondata import SUBJECTS, _VERBS

    examples = sorted(f"{SUBJECTS[0]} {verbs[0]}" for verbs in _VERBS.values())
    return {
        "J": model.actuated,
        "D": model.state_dim,
        "L": bundle.plan_length,
        "fps": bundle.skill_cfg.control_hz,
        "arena_half": pipeline.ARENA_HALF,
        "links": links,
        "contact_points": [{"link": l, "offset": list(o)} for l, o in model.contact_points],
        "sampler": plan_cfg.get("sampler", "ddim"),
        "instructions": examples,
    }


def create_app(bundle, plan_cfg=None, frontend_dir=None):
    plan_cfg = plan_cfg or {"sampler": "ddim", "ddim_steps": 50, "length": bundle.plan_length}
    app = FastAPI(title="textmotion", version="0.1.0")
    sessions: dict[str, _SessionEntry] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions

    def entry_or_404(session_id):
        entry = sessions.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return entry

    @app.get("/api/meta")
    def meta():
        return _meta(bundle, plan_cfg)

    @app.post("/api/session")
    def create_session():
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = _SessionEntry(bundle)
        return {"session_id": session_id}

    @app.delete("/api/session/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail="unknown session")
            del sessions[session_id]
        return {"deleted": session_id}

    @app.get("/api/session/{session_id}")
    def session_state(session_id: str):
        entry = entry_or_404(session_id)
        history = entry.session.history
        return {
            "history": [] if history is None else history.tolist(),
            "segments": entry.segments,
        }

    @app.post("/api/session/{session_id}/segment")
    def run_segment(session_id: str, body: SegmentBody):
        entry = entry_or_404(session_id)
        if not entry.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a segment is already running")
        try:
            seed = body.seed if body.seed is not None else entry.counter
            entry.counter += 1
            try:
                result = entry.session.run_segment(
                    body.instruction, waypoint=body.waypoint, seed=seed,
                    sampler=plan_cfg.get("sampler", "ddim"),
                    ddim_steps=plan_cfg.get("ddim_steps", 50))
            except ValueError as err:
                raise HTTPException(status_code=422, detail=str(err)) from err
            entry.segments.append({
                "instruction": body.instruction,
                "waypoint": list(body.waypoint) if body.waypoint else None,
                "seed": seed,
                "success": result.success,
                "distance": result.distance,
                "frames": len(result.executed),
                "completed": result.completed,
            })
            return {
                "plan": result.plan.tolist(),
                "executed": result.executed.tolist(),
                "actions": result.actions.tolist(),
                "success": result.success,
                "distance": result.distance,
                "completed": result.completed,
            }
        finally:
            entry.lock.release()

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    return app
