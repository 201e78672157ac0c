"""HTTP boundary: session lifecycle endpoints plus a live event stream.

The stream is server-sent events (SSE), not WebSocket.  Each frame is
``data: <json>`` followed by a blank line, where the json is the canonical
event line, so a subscriber that strips the ``data: `` prefix reassembles
the session log byte for byte.  Reconnect with ``?after=<seq>`` to resume
exactly after the last event you saw.

Requests touching one session are serialized by a per-session lock and the
work runs on the thread pool, so slow runs do not stall other sessions.
Events become visible to the stream atomically per request.  There is no
authentication; bind to loopback unless you know your network.

With ``create_app(log_dir=...)`` every session also appends its events to
``<log_dir>/<session_id>.jsonl``, one canonical line per event, flushed per
request, so the file always equals the stream so far.
"""

from __future__ import annotations

import asyncio
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from anyio import to_thread
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .scenario import MalformedScenario, Scenario, grid_rows, load_bundled, scenario_from_dict
from .session import (
    Mode,
    SessionInitFailure,
    SessionOver,
    SessionState,
    compute_metrics,
    create_session,
    drive,
)
from .slam import estimate_pose
from .wire import canon, event_line, event_to_wire

_MODE_WIRE = {m: m.name.lower() for m in Mode}


@dataclass
class SessionRecord:
    state: SessionState
    scenario_name: str
    seed: int
    created_at: str
    log_path: Path | None = None
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    changed: asyncio.Event = field(default_factory=asyncio.Event)

    def persist(self, events) -> None:
        if self.log_path is None:
            return
        with self.log_path.open("a", encoding="utf-8") as fh:
            for e in events:
                fh.write(event_line(e) + "\n")


class CreateSessionBody(BaseModel):
    scenario_name: str | None = None
    scenario: dict | None = None
    seed: int = 0


class UtteranceBody(BaseModel):
    text: str


def _wire_events(events) -> list[dict]:
    return [event_to_wire(e) for e in events]


def create_app(log_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="echomaze")
    sessions: dict[str, SessionRecord] = {}
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

    def get_record(session_id: str) -> SessionRecord:
        rec = sessions.get(session_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return rec

    @app.post("/sessions", status_code=201)
    async def create(body: CreateSessionBody) -> JSONResponse:
        if (body.scenario_name is None) == (body.scenario is None):
            raise HTTPException(
                status_code=400,
                detail="provide exactly one of scenario_name or scenario",
            )
        try:
            if body.scenario_name is not None:
                scenario: Scenario = load_bundled(body.scenario_name)
            else:
                scenario = scenario_from_dict(body.scenario)
        except MalformedScenario as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            state = await to_thread.run_sync(create_session, scenario, body.seed)
        except SessionInitFailure as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session_id = secrets.token_urlsafe(16)
        rec = SessionRecord(
            state=state,
            scenario_name=scenario.name,
            seed=body.seed,
            created_at=datetime.now(timezone.utc).isoformat(),
            log_path=None if log_dir is None else log_dir / f"{session_id}.jsonl",
        )
        sessions[session_id] = rec
        rec.persist(state.log)
        rec.changed.set()
        return JSONResponse(
            status_code=201,
            content=canon(
                {
                    "session_id": session_id,
                    "created_at": rec.created_at,
                    "scenario": rec.scenario_name,
                    "seed": rec.seed,
                    "events": _wire_events(state.log),
                }
            ),
        )

    @app.post("/sessions/{session_id}/utterances")
    async def utterances(session_id: str, body: UtteranceBody) -> JSONResponse:
        rec = get_record(session_id)
        async with rec.lock:
            try:
                events = await to_thread.run_sync(drive, rec.state, body.text)
            except SessionOver as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            rec.persist(events)
            rec.changed.set()
        accepted = any(e.kind == "Parsed" for e in events)
        return JSONResponse(
            content=canon({"accepted": accepted, "events": _wire_events(events)})
        )

    @app.post("/sessions/{session_id}/answers")
    async def answers(session_id: str, body: UtteranceBody) -> JSONResponse:
        rec = get_record(session_id)
        async with rec.lock:
            if rec.state.mode is not Mode.AWAITING_GUIDANCE:
                raise HTTPException(
                    status_code=409, detail="no guidance question is pending"
                )
            events = await to_thread.run_sync(drive, rec.state, body.text)
            rec.persist(events)
            rec.changed.set()
        return JSONResponse(content=canon({"events": _wire_events(events)}))

    @app.get("/sessions/{session_id}/state")
    async def state(session_id: str) -> JSONResponse:
        rec = get_record(session_id)
        async with rec.lock:
            est, cov = estimate_pose(rec.state.belief)
            payload = {
                "mode": _MODE_WIRE[rec.state.mode],
                "estimated_pose": {"x": est.x, "y": est.y, "theta": est.theta},
                "pose_covariance_3x3": cov.tolist(),
                "metrics": compute_metrics(rec.state).as_dict(),
            }
        return JSONResponse(content=canon(payload))

    @app.get("/sessions/{session_id}/map")
    async def recovered_map(session_id: str) -> JSONResponse:
        rec = get_record(session_id)
        async with rec.lock:
            plan_map = rec.state.plan_map
            payload = {
                "grid": grid_rows(plan_map),
                "cell_size": plan_map.cell_size,
                "goal": [plan_map.goal.col, plan_map.goal.row],
            }
        return JSONResponse(content=canon(payload))

    @app.get("/sessions/{session_id}/events")
    async def events(session_id: str, after: int = Query(default=0, ge=0)) -> StreamingResponse:
        rec = get_record(session_id)

        async def stream():
            # seq is gapless from 1, so log index == seq - 1 and a cursor
            # over the list resumes exactly after the requested seq
            cursor = after
            while True:
                log = rec.state.log
                while cursor < len(log):
                    line = event_line(log[cursor])
                    cursor += 1
                    yield f"data: {line}\n\n"
                rec.changed.clear()
                if len(rec.state.log) > cursor:
                    continue  # appended while we were draining
                await rec.changed.wait()

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"cache-control": "no-cache"},
        )

    return app


app = create_app()
