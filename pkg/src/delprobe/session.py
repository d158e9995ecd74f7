"""HTTP service for live human sessions on the deletion task.

One trial at a time: a session holds a seeded permutation of the trial
list, serves only the current trial, and refuses answers for any other.
State persists to disk after every response, so a crashed or refreshed
client resumes exactly where it stopped (the server cursor is
authoritative). A completed session also writes its export JSONL, whose
schema is exactly what ``participants.import_sessions`` reads.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from delprobe.errors import FormatError
from delprobe.seeding import derive_rng
from delprobe.taskgen import Trial, independence_reminder, render_prompt


class SessionCreate(BaseModel):
    meta: dict = {}


class ResponseBody(BaseModel):
    trial_id: str
    text: str


@dataclass
class SessionState:
    session_id: str
    meta: dict
    trial_ids: list[str]
    cursor: int = 0
    responses: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    issued_at: Optional[float] = None

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.trial_ids)

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "meta": self.meta,
                "trial_ids": self.trial_ids, "cursor": self.cursor,
                "responses": self.responses}

    @classmethod
    def from_json(cls, data: dict) -> "SessionState":
        return cls(session_id=data["session_id"], meta=data["meta"],
                   trial_ids=list(data["trial_ids"]),
                   cursor=int(data["cursor"]),
                   responses=list(data["responses"]))


class SessionStore:
    """All live sessions, mirrored to one JSON file each."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.directory.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, SessionState] = {}
        self._create_lock = threading.Lock()
        for path in sorted(self.directory.glob("*.json")):
            state = SessionState.from_json(
                json.loads(path.read_text(encoding="utf-8")))
            self._sessions[state.session_id] = state

    def add(self, state: SessionState) -> None:
        with self._create_lock:
            self._sessions[state.session_id] = state
        self.persist(state)

    def get(self, session_id: str) -> SessionState:
        state = self._sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return state

    def persist(self, state: SessionState) -> None:
        path = self.directory / f"{state.session_id}.json"
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(state.to_json(), ensure_ascii=False,
                                  sort_keys=True, indent=2),
                       encoding="utf-8")
        tmp.replace(path)


def export_lines(state: SessionState) -> str:
    """The session as import-ready JSON Lines, in presentation order."""
    lines = [json.dumps(row, ensure_ascii=False, sort_keys=True)
             for row in state.responses]
    return "".join(line + "\n" for line in lines)


def build_app(trials: Sequence[Trial], out_dir: str = ".", seed: int = 0,
              session_size: Optional[int] = None,
              ui_dir: Optional[str] = None,
              template_id: str = "default") -> FastAPI:
    trials = list(trials)
    if not trials:
        raise FormatError("cannot serve an empty trial list")
    if session_size is not None and not (1 <= session_size <= len(trials)):
        raise FormatError(
            f"session size {session_size} outside [1, {len(trials)}]")
    by_id = {t.trial_id: t for t in trials}
    store = SessionStore(Path(out_dir) / "sessions")

    app = FastAPI(title="deletion-task sessions")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])

    def instruction_text(trial: Trial) -> str:
        reminder = independence_reminder(trial.test.lang)
        prompt = render_prompt(trial, template_id=template_id)
        return f"{reminder}\n\n{prompt}"

    @app.post("/api/session")
    def create_session(payload: Optional[SessionCreate] = None) -> dict:
        meta = payload.meta if payload else {}
        session_id = uuid.uuid4().hex[:12]
        rng = derive_rng(seed, "session", session_id)
        order = [trials[i].trial_id
                 for i in rng.permutation(len(trials))]
        if session_size is not None:
            order = order[:session_size]
        state = SessionState(session_id=session_id, meta=meta,
                             trial_ids=order)
        store.add(state)
        return {"session_id": session_id, "n_trials": len(order)}

    @app.get("/api/session/{session_id}/next")
    def next_trial(session_id: str) -> dict:
        state = store.get(session_id)
        with state.lock:
            if state.done:
                return {"trial_id": None, "instruction_text": None,
                        "done": True, "position": state.cursor,
                        "n_trials": len(state.trial_ids)}
            trial = by_id[state.trial_ids[state.cursor]]
            if state.issued_at is None:
                state.issued_at = time.time()
            return {"trial_id": trial.trial_id,
                    "instruction_text": instruction_text(trial),
                    "done": False, "position": state.cursor,
                    "n_trials": len(state.trial_ids)}

    @app.post("/api/session/{session_id}/response")
    def post_response(session_id: str, payload: ResponseBody) -> dict:
        state = store.get(session_id)
        with state.lock:
            if state.done:
                raise HTTPException(status_code=409,
                                    detail="session already complete")
            current = state.trial_ids[state.cursor]
            if payload.trial_id != current:
                raise HTTPException(
                    status_code=409,
                    detail=f"current trial is {current!r}, "
                           f"not {payload.trial_id!r}")
            if not payload.text.strip():
                raise HTTPException(status_code=422,
                                    detail="empty response text")
            now = time.time()
            latency_ms = (0.0 if state.issued_at is None
                          else (now - state.issued_at) * 1000.0)
            state.responses.append({
                "session_id": state.session_id,
                "trial_id": current,
                "text": payload.text,
                "timestamp": now,
                "latency_ms": latency_ms,
            })
            state.cursor += 1
            state.issued_at = None
            store.persist(state)
            if state.done:
                export_path = (store.directory
                               / f"{state.session_id}.export.jsonl")
                export_path.write_text(export_lines(state),
                                       encoding="utf-8")
        return {"ok": True, "position": state.cursor,
                "done": state.done}

    @app.get("/api/session/{session_id}/export")
    def export_session(session_id: str) -> PlainTextResponse:
        state = store.get(session_id)
        with state.lock:
            body = export_lines(state)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
