"""Execution surfaces: a deterministic simulated device and a bridge protocol.

The simulator is a screen graph: each screen carries a payload (the fake
screenshot) and transitions keyed by action patterns. CLICK patterns match
inside an axis-aligned tolerance box; every other pattern matches its
serialized action (TYPE text compared after normalization). Unmatched
actions self-loop and set a no-effect flag; PRESS_HOME always returns to
the initial screen.

Real devices attach through a line protocol over any byte stream:

    SHOT                 ->  DIMS <w> <h> \n <base64 payload>
    EXEC <action line>   ->  OK | ERR <reason>
    RESET                ->  OK
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Protocol

from .codec import normalize_typed_text, parse_action, serialize_action
from .core import Action, ActionKind, ScreenDims, Screenshot
from .errors import EnvironmentFailure, UnknownInstruction, ValidationFailed

__all__ = [
    "SimApp",
    "SimState",
    "SimEnv",
    "Env",
    "sim_apply",
    "goal_satisfied",
    "load_sim_app",
    "BridgeClient",
    "serve_bridge",
]


class Env(Protocol):
    """What an episode needs from its execution surface."""

    @property
    def dims(self) -> ScreenDims: ...

    def reset(self) -> None: ...

    def screenshot(self) -> Screenshot: ...

    def apply(self, action: Action) -> None: ...

    def goal_satisfied(self, instruction_id: str) -> bool: ...


@dataclass(frozen=True, slots=True)
class Transition:
    """One edge of the screen graph."""

    pattern: Action
    to: str
    box: tuple[int, int, int, int] | None = None  # x1, y1, x2, y2 inclusive

    def matches(self, action: Action) -> bool:
        if action.kind is not self.pattern.kind:
            return False
        if action.kind is ActionKind.CLICK:
            if self.box is not None:
                x, y = action.click_point  # type: ignore[misc]
                x1, y1, x2, y2 = self.box
                return x1 <= x <= x2 and y1 <= y <= y2
            return action.click_point == self.pattern.click_point
        if action.kind is ActionKind.TYPE:
            return normalize_typed_text(action.text) == normalize_typed_text(self.pattern.text)  # type: ignore[arg-type]
        if action.kind is ActionKind.SCROLL:
            return action.scroll_dir is self.pattern.scroll_dir
        return True


@dataclass(frozen=True, slots=True)
class SimScreen:
    id: str
    payload_ref: str | bytes
    transitions: tuple[Transition, ...] = ()


@dataclass(frozen=True, slots=True)
class Goal:
    """Target screen plus any text that must have been typed."""

    screen: str
    typed: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class SimApp:
    """A deterministic screen graph standing in for a real device."""

    name: str
    dims: ScreenDims
    initial: str
    screens: dict[str, SimScreen]
    goals: dict[str, Goal]

    def __post_init__(self) -> None:
        if self.initial not in self.screens:
            raise ValidationFailed(f"initial screen {self.initial!r} not defined")
        for screen in self.screens.values():
            for transition in screen.transitions:
                if transition.to not in self.screens:
                    raise ValidationFailed(
                        f"transition from {screen.id!r} targets unknown screen {transition.to!r}"
                    )
        for iid, goal in self.goals.items():
            if goal.screen not in self.screens:
                raise ValidationFailed(f"goal {iid!r} targets unknown screen {goal.screen!r}")


@dataclass(frozen=True, slots=True)
class SimState:
    """Where a simulated episode currently is."""

    screen_id: str
    typed: tuple[str, ...] = ()
    no_effect: bool = False


def sim_apply(app: SimApp, state: SimState, action: Action) -> SimState:
    """Apply one action to the simulator; total and deterministic.

    TYPE text is recorded whether or not it triggers a transition, so goal
    predicates can require entered text.
    """
    typed = state.typed
    if action.kind is ActionKind.TYPE:
        typed = typed + (normalize_typed_text(action.text),)  # type: ignore[arg-type]
    if action.kind is ActionKind.PRESS_HOME:
        return SimState(screen_id=app.initial, typed=typed, no_effect=False)
    for transition in app.screens[state.screen_id].transitions:
        if transition.matches(action):
            return SimState(screen_id=transition.to, typed=typed, no_effect=False)
    return SimState(screen_id=state.screen_id, typed=typed, no_effect=True)


def goal_satisfied(app: SimApp, state: SimState, instruction_id: str) -> bool:
    """True iff the goal screen is current and all required text was typed."""
    goal = app.goals.get(instruction_id)
    if goal is None:
        raise UnknownInstruction(f"no goal for instruction {instruction_id!r}")
    if state.screen_id != goal.screen:
        return False
    entered = set(state.typed)
    return all(normalize_typed_text(text) in entered for text in goal.typed)


def load_sim_app(path: Path) -> SimApp:
    """Load a simulator definition from its JSON file."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    dims = ScreenDims(width=doc["dims"]["width"], height=doc["dims"]["height"])
    screens: dict[str, SimScreen] = {}
    for sid, sdoc in doc["screens"].items():
        transitions = []
        for tdoc in sdoc.get("transitions", ()):
            pattern = parse_action(tdoc["action"])
            box = tuple(tdoc["box"]) if "box" in tdoc else None
            transitions.append(Transition(pattern=pattern, to=tdoc["to"], box=box))
        payload = sdoc.get("payload", "")
        payload_ref: str | bytes
        if payload:
            payload_ref = str((path.parent / payload).resolve())
        else:
            payload_ref = f"sim:{sid}".encode()
        screens[sid] = SimScreen(id=sid, payload_ref=payload_ref, transitions=tuple(transitions))
    goals = {
        iid: Goal(screen=gdoc["screen"], typed=tuple(gdoc.get("typed", ())))
        for iid, gdoc in doc.get("goals", {}).items()
    }
    return SimApp(
        name=doc.get("name", path.stem),
        dims=dims,
        initial=doc["initial"],
        screens=screens,
        goals=goals,
    )


class SimEnv:
    """Stateful wrapper implementing the episode-facing surface."""

    def __init__(self, app: SimApp):
        self.app = app
        self.state = SimState(screen_id=app.initial)
        self._shot_seq = 0

    @property
    def dims(self) -> ScreenDims:
        return self.app.dims

    def reset(self) -> None:
        self.state = SimState(screen_id=self.app.initial)
        self._shot_seq = 0

    def screenshot(self) -> Screenshot:
        shot = Screenshot(
            id=f"s{self._shot_seq}-{self.state.screen_id}",
            dims=self.app.dims,
            payload_ref=self.app.screens[self.state.screen_id].payload_ref,
        )
        self._shot_seq += 1
        return shot

    def apply(self, action: Action) -> None:
        self.state = sim_apply(self.app, self.state, action)

    def goal_satisfied(self, instruction_id: str) -> bool:
        return goal_satisfied(self.app, self.state, instruction_id)


# ---------------------------------------------------------------------------
# Device bridge line protocol
# ---------------------------------------------------------------------------

def _read_line(stream: BinaryIO) -> str:
    try:
        line = stream.readline()
    except OSError as exc:
        raise EnvironmentFailure(f"bridge read failed: {exc}") from exc
    if not line:
        raise EnvironmentFailure("bridge connection closed")
    return line.decode("utf-8").rstrip("\r\n")


class BridgeClient:
    """Episode-facing adapter over a bridge byte stream.

    Real devices cannot report goal satisfaction, so ``goal_satisfied`` is
    always False and episodes end on COMPLETE/IMPOSSIBLE or budget.
    """

    def __init__(self, reader: BinaryIO, writer: BinaryIO):
        self._reader = reader
        self._writer = writer
        self._shot_seq = 0
        self._dims: ScreenDims | None = None

    @property
    def dims(self) -> ScreenDims:
        if self._dims is None:
            raise EnvironmentFailure("no screenshot taken yet; dims unknown")
        return self._dims

    def _send(self, line: str) -> None:
        try:
            self._writer.write((line + "\n").encode("utf-8"))
            self._writer.flush()
        except OSError as exc:
            raise EnvironmentFailure(f"bridge write failed: {exc}") from exc

    def reset(self) -> None:
        self._send("RESET")
        reply = _read_line(self._reader)
        if reply != "OK":
            raise EnvironmentFailure(f"RESET failed: {reply}")
        self._shot_seq = 0

    def screenshot(self) -> Screenshot:
        self._send("SHOT")
        header = _read_line(self._reader)
        parts = header.split()
        if len(parts) != 3 or parts[0] != "DIMS":
            raise EnvironmentFailure(f"bad SHOT header: {header!r}")
        self._dims = ScreenDims(width=int(parts[1]), height=int(parts[2]))
        payload = base64.b64decode(_read_line(self._reader))
        shot = Screenshot(id=f"shot-{self._shot_seq}", dims=self._dims, payload_ref=payload)
        self._shot_seq += 1
        return shot

    def apply(self, action: Action) -> None:
        self._send(f"EXEC {serialize_action(action)}")
        reply = _read_line(self._reader)
        if reply == "OK":
            return
        if reply.startswith("ERR"):
            raise EnvironmentFailure(reply[3:].strip() or "device rejected action")
        raise EnvironmentFailure(f"bad EXEC reply: {reply!r}")

    def goal_satisfied(self, instruction_id: str) -> bool:
        return False


def _payload_bytes(shot: Screenshot) -> bytes:
    if isinstance(shot.payload_ref, bytes):
        return shot.payload_ref
    return Path(shot.payload_ref).read_bytes()


def serve_bridge(env: Env, reader: BinaryIO, writer: BinaryIO) -> None:
    """Expose any environment over the bridge protocol until EOF.

    Reference implementation of the device side; tests run it against a
    SimEnv over a socket pair.
    """
    while True:
        raw = reader.readline()
        if not raw:
            return
        line = raw.decode("utf-8").rstrip("\r\n")
        if line == "SHOT":
            shot = env.screenshot()
            writer.write(f"DIMS {shot.dims.width} {shot.dims.height}\n".encode())
            writer.write(base64.b64encode(_payload_bytes(shot)) + b"\n")
        elif line.startswith("EXEC"):
            try:
                env.apply(parse_action(line[4:]))
                writer.write(b"OK\n")
            except Exception as exc:  # deliberately total: bridge must answer
                writer.write(f"ERR {exc}\n".encode())
        elif line == "RESET":
            env.reset()
            writer.write(b"OK\n")
        else:
            writer.write(f"ERR unknown request {line!r}\n".encode())
        writer.flush()
