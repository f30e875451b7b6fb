"""Network surface: episode lifecycle, live event stream, interventions.

Episodes run on worker threads; every controller event is appended to a
per-episode list under a condition variable with a monotonically increasing
sequence number. The WebSocket stream delivers events at-least-once (a
reconnecting client resumes from its cursor and deduplicates by ``seq``).
Interventions are a rendezvous keyed by request id with exactly-once
delivery: a second POST for the same request id gets 409.
"""

from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from pydantic import BaseModel

from .backends import Backend, BackendConfig, make_backend
from .codec import parse_action
from .controller import (
    EpisodeCaps,
    InterventionRequest,
    InterventionResponse,
    InterventionSourceKind,
    run_episode,
)
from .core import EpisodeMode, EpisodeStatus, Instruction, Screenshot
from .env import Env, SimApp, SimEnv, load_sim_app
from .errors import InterventionTimeout, MalformedAction, StepgateError
from .store import load_instruction_pack

__all__ = ["ServiceConfig", "EpisodeRuntime", "create_app", "load_service_config"]


@dataclass
class ServiceConfig:
    """Everything the service needs to host episodes."""

    instructions: dict[str, Instruction]
    sim_app: SimApp
    backends: dict[str, BackendConfig]
    gamma_default: float = 4.0
    caps: EpisodeCaps = field(default_factory=EpisodeCaps)
    console_dir: Path | None = None


def load_service_config(path: Path) -> ServiceConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(path).parent
    instructions = {
        i.id: i for i in load_instruction_pack(base / doc["instructions"])
    }
    sim_app = load_sim_app(base / doc["sim_app"])
    backends = {
        name: BackendConfig(
            kind=cfg["kind"],
            endpoint=cfg.get("endpoint"),
            auth_token_env=cfg.get("auth_token_env"),
            timeout=float(cfg.get("timeout", 30.0)),
            retries=int(cfg.get("retries", 3)),
            script_path=str(base / cfg["script_path"]) if cfg.get("script_path") else None,
            model=cfg.get("model", "default"),
        )
        for name, cfg in doc.get("backends", {}).items()
    }
    caps = EpisodeCaps(
        max_steps=int(doc.get("max_steps", 10)),
        intervention_timeout=doc.get("intervention_timeout", 300.0),
    )
    console_dir = base / doc["console_dir"] if doc.get("console_dir") else None
    return ServiceConfig(
        instructions=instructions,
        sim_app=sim_app,
        backends=backends,
        gamma_default=float(doc.get("gamma", 4.0)),
        caps=caps,
        console_dir=console_dir,
    )


class _RecordingEnv:
    """Env proxy that remembers every screenshot so the API can serve them."""

    def __init__(self, inner: Env):
        self._inner = inner
        self.shots: dict[str, Screenshot] = {}

    @property
    def dims(self):
        return self._inner.dims

    def reset(self) -> None:
        self._inner.reset()

    def screenshot(self) -> Screenshot:
        shot = self._inner.screenshot()
        self.shots[shot.id] = shot
        return shot

    def apply(self, action) -> None:
        self._inner.apply(action)

    def goal_satisfied(self, instruction_id: str) -> bool:
        return self._inner.goal_satisfied(instruction_id)


class EpisodeHandle:
    """Shared state between one episode thread and the HTTP surface."""

    def __init__(self, episode_id: str, instruction: Instruction, mode: EpisodeMode,
                 gamma: float, env: _RecordingEnv, env_kind: str, max_steps: int):
        self.id = episode_id
        self.instruction = instruction
        self.mode = mode
        self.gamma = gamma
        self.env = env
        self.env_kind = env_kind
        self.max_steps = max_steps
        self.cond = threading.Condition()
        self.events: list[dict] = []
        self.status = EpisodeStatus.RUNNING
        self.pending: InterventionRequest | None = None
        self.responses: dict[str, InterventionResponse] = {}
        self.resolved: set[str] = set()
        self.thread: threading.Thread | None = None

    # -- events ---------------------------------------------------------------

    def emit(self, kind: str, payload: dict) -> None:
        with self.cond:
            self.events.append({"seq": len(self.events) + 1, "type": kind, "payload": payload})
            self.cond.notify_all()

    def events_after(self, cursor: int) -> list[dict]:
        with self.cond:
            return [e for e in self.events if e["seq"] > cursor]

    # -- intervention rendezvous -------------------------------------------------

    def request_intervention(self, req: InterventionRequest, timeout: float | None) -> InterventionResponse:
        with self.cond:
            self.pending = req
            self.status = EpisodeStatus.AWAITING_INTERVENTION
            self.cond.notify_all()
            deadline = None if timeout is None else (threading.TIMEOUT_MAX if timeout < 0 else timeout)
            got = self.cond.wait_for(lambda: req.request_id in self.responses, timeout=deadline)
            self.pending = None
            if not got:
                self.status = EpisodeStatus.ABORTED
                raise InterventionTimeout(f"request {req.request_id} timed out")
            self.status = EpisodeStatus.RUNNING
            return self.responses[req.request_id]

    def deliver(self, request_id: str, action_text: str) -> None:
        """Parse and deliver guidance exactly once; raises HTTPException."""
        with self.cond:
            if request_id in self.resolved:
                raise HTTPException(status_code=409, detail="request already resolved")
            if self.pending is None or self.pending.request_id != request_id:
                raise HTTPException(status_code=409, detail="stale request id")
            try:
                action = parse_action(action_text)
            except MalformedAction as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            self.responses[request_id] = InterventionResponse(
                request_id=request_id, action=action, source=InterventionSourceKind.HUMAN
            )
            self.resolved.add(request_id)
            self.cond.notify_all()

    # -- snapshots ----------------------------------------------------------------

    def snapshot(self) -> dict:
        with self.cond:
            events = list(self.events)
            status = self.status
            pending = self.pending
        history: list[dict] = []
        current: dict[str, Any] = {}
        for event in events:
            payload = event["payload"]
            if event["type"] == "step_started":
                current = {"index": payload["step_index"], "screenshot_id": payload["screenshot_id"]}
            elif event["type"] == "action_proposed":
                current["proposed_action"] = payload["action"]
                current["confidence"] = payload["confidence"]
            elif event["type"] == "decision":
                current["decision"] = payload["verdict"]
            elif event["type"] == "action_executed":
                current["executed_action"] = payload["action"]
                current["intervened"] = payload["intervened"]
                history.append(current)
                current = {}
        doc = {
            "episode_id": self.id,
            "instruction": {"id": self.instruction.id, "text": self.instruction.text},
            "mode": self.mode.value,
            "gamma": self.gamma,
            "status": status.value,
            "step_budget": max(self.max_steps - len(history), 0),
            "history": history,
            "pending_request": None,
            "last_seq": events[-1]["seq"] if events else 0,
        }
        if pending is not None:
            doc["pending_request"] = {
                "request_id": pending.request_id,
                "step_index": pending.step_index,
                "screenshot_id": pending.screenshot.id,
                "dims": {
                    "width": pending.screenshot.dims.width,
                    "height": pending.screenshot.dims.height,
                },
                "proposed_action": _serialize(pending.proposed_action),
                "confidence": pending.confidence,
                "plan_item": pending.plan_item,
            }
        return doc


def _serialize(action) -> str:
    from .codec import serialize_action

    return serialize_action(action)


class _HandleSource:
    """InterventionSource adapter over an episode handle."""

    def __init__(self, handle: EpisodeHandle):
        self._handle = handle

    def request(self, req: InterventionRequest, timeout: float | None) -> InterventionResponse:
        return self._handle.request_intervention(req, timeout)


class EpisodeRuntime:
    """Owns all live episodes and the device lease."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.episodes: dict[str, EpisodeHandle] = {}
        self._lock = threading.Lock()
        self._device_leased = False
        self._counter = 0

    def _next_id(self) -> str:
        self._counter += 1
        return f"ep-{self._counter:04d}"

    def start_episode(self, instruction_id: str, mode: str, gamma: float,
                      env_kind: str, backend_name: str) -> str:
        instruction = self.config.instructions.get(instruction_id)
        if instruction is None:
            raise HTTPException(status_code=400, detail=f"unknown instruction {instruction_id!r}")
        backend_config = self.config.backends.get(backend_name)
        if backend_config is None:
            raise HTTPException(status_code=400, detail=f"unknown backend {backend_name!r}")
        try:
            episode_mode = EpisodeMode(mode.upper())
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"unknown mode {mode!r}") from exc
        if env_kind not in ("sim", "device"):
            raise HTTPException(status_code=400, detail=f"unknown env {env_kind!r}")

        with self._lock:
            if env_kind == "device":
                if self._device_leased:
                    raise HTTPException(status_code=409, detail="device environment already leased")
                self._device_leased = True
            episode_id = self._next_id()

        backend: Backend = make_backend(backend_config)
        env = _RecordingEnv(SimEnv(self.config.sim_app))
        handle = EpisodeHandle(
            episode_id, instruction, episode_mode, gamma, env, env_kind,
            self.config.caps.max_steps,
        )
        self.episodes[episode_id] = handle

        def _run() -> None:
            try:
                result = run_episode(
                    instruction=instruction,
                    policy_backend=backend,
                    env=env,
                    gamma=gamma,
                    intervention_source=_HandleSource(handle),
                    caps=self.config.caps,
                    mode=episode_mode,
                    episode_id=episode_id,
                    on_event=handle.emit,
                )
                with handle.cond:
                    handle.status = result.status
                    handle.cond.notify_all()
            except StepgateError as exc:
                handle.emit("episode_finished", {"status": "ABORTED", "error": str(exc)})
                with handle.cond:
                    handle.status = EpisodeStatus.ABORTED
                    handle.cond.notify_all()
            finally:
                if env_kind == "device":
                    with self._lock:
                        self._device_leased = False

        thread = threading.Thread(target=_run, name=f"episode-{episode_id}", daemon=True)
        handle.thread = thread
        thread.start()
        return episode_id

    def get(self, episode_id: str) -> EpisodeHandle:
        handle = self.episodes.get(episode_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"no episode {episode_id!r}")
        return handle


class CreateEpisodeBody(BaseModel):
    instruction_id: str
    mode: str = "ADAPTIVE"
    gamma: float | None = None
    env: str = "sim"
    policy_backend: str


class InterveneBody(BaseModel):
    request_id: str
    action: str


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="stepgate episode service")
    runtime = EpisodeRuntime(config)
    app.state.runtime = runtime

    @app.post("/episodes", status_code=202)
    def create_episode(body: CreateEpisodeBody) -> dict:
        gamma = config.gamma_default if body.gamma is None else body.gamma
        episode_id = runtime.start_episode(
            body.instruction_id, body.mode, gamma, body.env, body.policy_backend
        )
        return {"episode_id": episode_id}

    @app.get("/episodes/{episode_id}")
    def get_episode(episode_id: str) -> dict:
        return runtime.get(episode_id).snapshot()

    @app.get("/episodes/{episode_id}/screenshots/{shot_id}")
    def get_screenshot(episode_id: str, shot_id: str) -> Response:
        handle = runtime.get(episode_id)
        shot = handle.env.shots.get(shot_id)
        if shot is None:
            raise HTTPException(status_code=404, detail=f"no screenshot {shot_id!r}")
        payload = shot.payload_ref
        data = payload if isinstance(payload, bytes) else Path(payload).read_bytes()
        media = "image/png" if data[:8] == b"\x89PNG\r\n\x1a\n" else "application/octet-stream"
        return Response(content=data, media_type=media)

    @app.post("/episodes/{episode_id}/intervene", status_code=204)
    def intervene(episode_id: str, body: InterveneBody) -> Response:
        handle = runtime.get(episode_id)
        handle.deliver(body.request_id, body.action)
        return Response(status_code=204)

    @app.websocket("/episodes/{episode_id}/events")
    async def events(websocket: WebSocket, episode_id: str) -> None:
        handle = runtime.episodes.get(episode_id)
        if handle is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        try:
            cursor = int(websocket.query_params.get("from", "0"))
        except ValueError:
            cursor = 0
        try:
            while True:
                batch = handle.events_after(cursor)
                for event in batch:
                    await websocket.send_text(json.dumps(event, sort_keys=True))
                    cursor = event["seq"]
                with handle.cond:
                    terminal = handle.status.terminal and not handle.events_after(cursor)
                if terminal:
                    await websocket.close()
                    return
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    if config.console_dir and config.console_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.console_dir, html=True), name="console")

    return app
