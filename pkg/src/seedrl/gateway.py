"""Session gateway between the trainer and human consoles / dashboards.

The trainer talks to a thread-safe :class:`GatewayHub`; WebSocket and HTTP
clients talk to a FastAPI app wired to the same hub. Messages are JSON text
frames. A training session has at most one outstanding proposal at a time,
and the trainer never advances past it without feedback, a timeout, or a
session abort. Disconnection of the human client pauses training; a
reconnecting client gets the outstanding proposal replayed.
"""

from __future__ import annotations

import itertools
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import anyio
from fastapi import FastAPI, HTTPException, WebSocket
from fastapi.responses import JSONResponse

from .feedback import FeedbackRequest
from .sim_tabletop import DEFAULT_WORKSPACE, Workspace
from .skill_space import SKILL_NAMES, SkillAction, SkillId

log = logging.getLogger("seedrl.gateway")

WIRE_KINDS = ("hello", "proposal", "feedback", "control", "stats", "scene", "error")
MODES = ("train_human", "observe")


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class WireMessage:
    kind: str
    session_id: Optional[str] = None
    step_id: Optional[int] = None
    payload: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "session_id": self.session_id,
                           "step_id": self.step_id, "payload": self.payload},
                          sort_keys=True)


def parse_message(raw: str | bytes | dict) -> WireMessage:
    if isinstance(raw, (str, bytes)):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed frame: {exc}") from exc
    else:
        doc = raw
    if not isinstance(doc, dict):
        raise ProtocolError("frame must be a JSON object")
    kind = doc.get("kind")
    if kind not in WIRE_KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    step_id = doc.get("step_id")
    if step_id is not None and not isinstance(step_id, int):
        raise ProtocolError("step_id must be an integer")
    payload = doc.get("payload") or {}
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object")
    return WireMessage(kind=kind, session_id=doc.get("session_id"),
                       step_id=step_id, payload=payload)


def project_overlay(action: SkillAction, workspace: Workspace = DEFAULT_WORKSPACE) -> dict:
    """Top-down projection of a skill's parameters for console rendering."""
    overlay: dict = {"skill": SKILL_NAMES[action.skill], "marker": None,
                     "z_frac": None, "arrow": None,
                     "params": [float(v) for v in
                                action.params_world[:int(action.mask.sum())]]}
    if action.skill == SkillId.RELEASE:
        return overlay
    x, y, z = (float(v) for v in action.params_world[:3])
    x_lo, x_hi = workspace.x_range
    y_lo, y_hi = workspace.y_range
    z_lo, z_hi = workspace.z_range
    overlay["marker"] = {"x": (x - x_lo) / (x_hi - x_lo), "y": (y - y_lo) / (y_hi - y_lo)}
    overlay["z_frac"] = (z - z_lo) / (z_hi - z_lo)
    if action.skill in (SkillId.PUSH_X, SkillId.PUSH_Y):
        delta = float(action.params_world[3])
        axis = "x" if action.skill == SkillId.PUSH_X else "y"
        span = (x_hi - x_lo) if axis == "x" else (y_hi - y_lo)
        overlay["arrow"] = {"axis": axis, "length": delta / span}
    return overlay


@dataclass
class SessionState:
    session_id: str
    mode: str
    outbox: "queue.Queue[WireMessage]" = field(default_factory=queue.Queue)
    connected: bool = True
    last_rx: float = field(default_factory=time.monotonic)


class _Outstanding:
    def __init__(self, step_id: int, message: WireMessage):
        self.step_id = step_id
        self.message = message
        self.created = time.monotonic()
        self.value: Optional[int] = None


class GatewayHub:
    """Thread-safe mailbox shared by the trainer thread and client handlers."""

    def __init__(self, require_train_client: bool = False,
                 heartbeat_interval: Optional[float] = 5.0):
        self._cond = threading.Condition()
        self._sessions: dict[str, SessionState] = {}
        self._ids = itertools.count(1)
        self._outstanding: Optional[_Outstanding] = None
        self._paused = False
        self._latest_scene: Optional[dict] = None
        self._latest_stats: Optional[dict] = None
        self.require_train_client = require_train_client
        self.heartbeat_interval = heartbeat_interval

    # -- sessions -----------------------------------------------------------

    def register_session(self, mode: str) -> SessionState:
        if mode not in MODES:
            raise ProtocolError(f"unknown session mode {mode!r}")
        with self._cond:
            session = SessionState(session_id=f"s-{next(self._ids)}", mode=mode)
            self._sessions[session.session_id] = session
            if self._latest_scene is not None:
                session.outbox.put(WireMessage("scene", payload=self._latest_scene))
            if self._latest_stats is not None:
                session.outbox.put(WireMessage("stats", payload=self._latest_stats))
            if mode == "train_human" and self._outstanding is not None:
                session.outbox.put(self._outstanding.message)
            self._cond.notify_all()
            return session

    def unregister_session(self, session_id: str) -> None:
        with self._cond:
            session = self._sessions.pop(session_id, None)
            if session is not None:
                session.connected = False
            self._cond.notify_all()

    def _train_sessions(self) -> list[SessionState]:
        return [s for s in self._sessions.values() if s.mode == "train_human"]

    def has_train_session(self) -> bool:
        with self._cond:
            return bool(self._train_sessions())

    # -- broadcast ----------------------------------------------------------

    def _broadcast(self, message: WireMessage, train_only: bool = False) -> None:
        for session in self._sessions.values():
            if train_only and session.mode != "train_human":
                continue
            session.outbox.put(message)

    def publish_scene(self, doc: dict) -> None:
        with self._cond:
            self._latest_scene = doc
            self._broadcast(WireMessage("scene", payload=doc))

    def publish_stats(self, doc: dict) -> None:
        with self._cond:
            self._latest_stats = doc
            self._broadcast(WireMessage("stats", payload=doc))

    def latest_scene(self) -> Optional[dict]:
        with self._cond:
            return self._latest_scene

    def latest_stats(self) -> Optional[dict]:
        with self._cond:
            return self._latest_stats

    # -- control ------------------------------------------------------------

    def control(self, op: str) -> None:
        with self._cond:
            if op == "pause":
                self._paused = True
            elif op == "resume":
                self._paused = False
            elif op in ("heartbeat", "heartbeat_ack"):
                pass
            else:
                raise ProtocolError(f"unknown control op {op!r}")
            self._cond.notify_all()

    @property
    def paused(self) -> bool:
        with self._cond:
            return self._paused

    def _blocked(self) -> bool:
        # Called under the lock: paused explicitly, or human mode with nobody home.
        return self._paused or (self.require_train_client and not self._train_sessions())

    def wait_if_paused(self, poll_s: float = 0.1) -> None:
        with self._cond:
            while self._blocked():
                self._cond.wait(poll_s)

    # -- proposal / feedback (feedback.FeedbackChannel) ----------------------

    def request_feedback(self, request: FeedbackRequest,
                         timeout_s: float) -> Optional[tuple[int, int]]:
        message = WireMessage("proposal", step_id=request.step_id, payload={
            "step_id": request.step_id,
            "render": request.render,
            "skill": SKILL_NAMES[request.skill],
            "params_world": list(request.params_world),
            "overlay": request.overlay,
        })
        with self._cond:
            if self._outstanding is not None:
                raise ProtocolError("a proposal is already outstanding")
            self._latest_scene = request.render
            out = _Outstanding(request.step_id, message)
            self._outstanding = out
            self._broadcast(WireMessage("scene", payload=request.render))
            self._broadcast(message, train_only=True)
            remaining = timeout_s
            last_tick = time.monotonic()
            while out.value is None:
                if self._blocked():
                    self._cond.wait(0.1)
                    last_tick = time.monotonic()  # clock frozen while paused
                    continue
                now = time.monotonic()
                remaining -= now - last_tick
                last_tick = now
                if remaining <= 0:
                    self._outstanding = None
                    self._broadcast(WireMessage(
                        "error", step_id=request.step_id,
                        payload={"code": "timeout", "detail": "feedback timed out"}),
                        train_only=True)
                    return None
                self._cond.wait(min(remaining, 0.1))
            self._outstanding = None
            latency_ms = int((time.monotonic() - out.created) * 1000)
            return out.value, latency_ms

    def submit_feedback(self, step_id: int, value: int, source: str = "human") -> bool:
        """Resolve the outstanding proposal; returns False for stale steps."""
        if value not in (-1, 0, 1):
            raise ProtocolError(f"feedback value {value} out of range")
        with self._cond:
            out = self._outstanding
            if out is None or out.step_id != step_id or out.value is not None:
                log.warning("discarding stale feedback for step %s", step_id)
                return False
            out.value = value
            self._cond.notify_all()
            return True


def create_app(hub: GatewayHub, static_dir: Optional[str | Path] = None):
    """FastAPI app speaking the wire protocol plus plain-HTTP fallbacks."""
    app = FastAPI(title="seedrl gateway")

    @app.get("/scene")
    def get_scene():
        doc = hub.latest_scene()
        if doc is None:
            raise HTTPException(status_code=404, detail="no scene yet")
        return JSONResponse(doc)

    @app.get("/stats")
    def get_stats():
        doc = hub.latest_stats()
        if doc is None:
            raise HTTPException(status_code=404, detail="no stats yet")
        return JSONResponse(doc)

    @app.post("/feedback")
    def post_feedback(body: dict):
        try:
            step_id = int(body["step_id"])
            value = int(body["value"])
        except (KeyError, TypeError, ValueError):
            raise HTTPException(status_code=422, detail="need integer step_id and value")
        accepted = hub.submit_feedback(step_id, value)
        if not accepted:
            return JSONResponse({"ok": False, "code": "stale_step"}, status_code=409)
        return {"ok": True}

    async def _dispatch(ws: WebSocket, session: SessionState, msg: WireMessage) -> None:
        if msg.kind == "feedback":
            step_id = msg.step_id if msg.step_id is not None else msg.payload.get("step_id")
            if not isinstance(step_id, int):
                raise ProtocolError("feedback needs a step_id")
            accepted = hub.submit_feedback(step_id, int(msg.payload["value"]))
            if not accepted:
                await ws.send_text(WireMessage(
                    "error", session_id=session.session_id, step_id=step_id,
                    payload={"code": "stale_step",
                             "detail": f"step {step_id} is not outstanding"}).to_json())
        elif msg.kind == "control":
            hub.control(str(msg.payload.get("op")))
        else:
            raise ProtocolError(f"unexpected client message kind {msg.kind!r}")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session: Optional[SessionState] = None
        try:
            hello = parse_message(await ws.receive_text())
            if hello.kind != "hello":
                raise ProtocolError("first frame must be hello")
            mode = str(hello.payload.get("mode", "observe"))
            session = hub.register_session(mode)
            await ws.send_text(WireMessage(
                "hello", session_id=session.session_id,
                payload={"ok": True, "mode": mode}).to_json())

            async def sender():
                interval = hub.heartbeat_interval
                last_beat = time.monotonic()
                while True:
                    msg = await anyio.to_thread.run_sync(_pop, session.outbox)
                    if msg is not None:
                        await ws.send_text(msg.to_json())
                        continue
                    if interval is None:
                        continue
                    now = time.monotonic()
                    if now - session.last_rx > 3 * interval:
                        log.warning("session %s missed heartbeats; closing",
                                    session.session_id)
                        await ws.close()
                        return
                    if now - last_beat >= interval:
                        last_beat = now
                        await ws.send_text(WireMessage(
                            "control", session_id=session.session_id,
                            payload={"op": "heartbeat"}).to_json())

            async def receiver():
                while True:
                    text = await ws.receive_text()
                    session.last_rx = time.monotonic()
                    try:
                        msg = parse_message(text)
                        await _dispatch(ws, session, msg)
                    except ProtocolError as exc:
                        await ws.send_text(WireMessage(
                            "error", session_id=session.session_id,
                            payload={"code": "protocol", "detail": str(exc)}).to_json())

            async with anyio.create_task_group() as tg:
                tg.start_soon(sender)
                tg.start_soon(receiver)
        except ProtocolError as exc:
            try:
                await ws.send_text(WireMessage(
                    "error", payload={"code": "protocol", "detail": str(exc)}).to_json())
                await ws.close()
            except Exception:
                pass
        except Exception:
            # Disconnects (also surfacing as task-group exception groups) just
            # end the session; unregistering below pauses training if needed.
            pass
        finally:
            if session is not None:
                hub.unregister_session(session.session_id)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app


def _pop(q: "queue.Queue[WireMessage]") -> Optional[WireMessage]:
    try:
        return q.get(timeout=0.1)
    except queue.Empty:
        return None


def serve(bind_address: str, hub: GatewayHub,
          static_dir: Optional[str | Path] = None) -> None:
    """Run the gateway (blocking); use a thread next to the trainer."""
    import uvicorn

    host, _, port = bind_address.rpartition(":")
    app = create_app(hub, static_dir=static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
