"""Domain types shared by every module.

These are plain immutable values: constructors validate shape invariants and
nothing else. Steps that may arrive malformed from a backend are *not*
rejected at construction; :func:`validate_step` reports their violations so
the refinement stage can repair or drop them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class ActionKind(str, enum.Enum):
    CLICK = "CLICK"
    SCROLL = "SCROLL"
    TYPE = "TYPE"
    PRESS_BACK = "PRESS_BACK"
    PRESS_HOME = "PRESS_HOME"
    COMPLETE = "COMPLETE"
    IMPOSSIBLE = "IMPOSSIBLE"


class ScrollDir(str, enum.Enum):
    UP = "UP"
    DOWN = "DOWN"
    LEFT = "LEFT"
    RIGHT = "RIGHT"


# Column grouping used by report tables: the two PRESS_* kinds share a column,
# as do the two terminal kinds.
ACTION_GROUPS: dict[str, tuple[ActionKind, ...]] = {
    "CLICK": (ActionKind.CLICK,),
    "TYPE": (ActionKind.TYPE,),
    "SCROLL": (ActionKind.SCROLL,),
    "PRESS": (ActionKind.PRESS_BACK, ActionKind.PRESS_HOME),
    "STOP": (ActionKind.COMPLETE, ActionKind.IMPOSSIBLE),
}

#: Terminal kinds: executing one of these ends an episode.
TERMINAL_KINDS = frozenset({ActionKind.COMPLETE, ActionKind.IMPOSSIBLE})

# Everything str.splitlines() treats as a boundary; the wire grammar is
# line-oriented, so none of these may appear inside TYPE text.
LINE_BREAK_CHARS = frozenset("\n\r\x0b\x0c\x1c\x1d\x1e\x85  ")


@dataclass(frozen=True, slots=True)
class Action:
    """One of the 7 device actions, with its arguments.

    ``click_point`` is present iff kind is CLICK, ``scroll_dir`` iff SCROLL,
    ``text`` iff TYPE. Coordinates are non-negative device pixels. TYPE text
    must be newline-free because the wire grammar is line-oriented.
    """

    kind: ActionKind
    click_point: tuple[int, int] | None = None
    scroll_dir: ScrollDir | None = None
    text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActionKind(self.kind))
        if self.scroll_dir is not None:
            object.__setattr__(self, "scroll_dir", ScrollDir(self.scroll_dir))
        if (self.kind is ActionKind.CLICK) != (self.click_point is not None):
            raise ValueError("click_point present iff kind is CLICK")
        if (self.kind is ActionKind.SCROLL) != (self.scroll_dir is not None):
            raise ValueError("scroll_dir present iff kind is SCROLL")
        if (self.kind is ActionKind.TYPE) != (self.text is not None):
            raise ValueError("text present iff kind is TYPE")
        if self.click_point is not None:
            x, y = self.click_point
            if not (isinstance(x, int) and isinstance(y, int)):
                raise ValueError("coordinates must be integers")
            if x < 0 or y < 0:
                raise ValueError("coordinates must be non-negative")
            object.__setattr__(self, "click_point", (x, y))
        if self.text is not None and LINE_BREAK_CHARS.intersection(self.text):
            raise ValueError("TYPE text must not contain line-breaking characters")

    @classmethod
    def click(cls, x: int, y: int) -> "Action":
        return cls(ActionKind.CLICK, click_point=(x, y))

    @classmethod
    def scroll(cls, direction: ScrollDir | str) -> "Action":
        return cls(ActionKind.SCROLL, scroll_dir=ScrollDir(str(direction).upper()))

    @classmethod
    def type_text(cls, text: str) -> "Action":
        return cls(ActionKind.TYPE, text=text)

    @classmethod
    def press_back(cls) -> "Action":
        return cls(ActionKind.PRESS_BACK)

    @classmethod
    def press_home(cls) -> "Action":
        return cls(ActionKind.PRESS_HOME)

    @classmethod
    def complete(cls) -> "Action":
        return cls(ActionKind.COMPLETE)

    @classmethod
    def impossible(cls) -> "Action":
        return cls(ActionKind.IMPOSSIBLE)


@dataclass(frozen=True, slots=True)
class ScreenDims:
    """Device screen size in pixels; both dimensions strictly positive."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("screen dimensions must be strictly positive")


@dataclass(frozen=True, slots=True)
class Screenshot:
    """Opaque screen capture: an id, the device dims, and a payload reference.

    ``payload_ref`` is either a content-addressed file path (str) or inline
    bytes; the framework never inspects pixels.
    """

    id: str
    dims: ScreenDims
    payload_ref: str | bytes = b""


class Language(str, enum.Enum):
    EN = "EN"
    ZH = "ZH"


class Scenario(str, enum.Enum):
    NORMAL = "NORMAL"
    AMBIGUOUS = "AMBIGUOUS"
    INTERRUPTION = "INTERRUPTION"
    HIJACK = "HIJACK"


@dataclass(frozen=True, slots=True)
class Instruction:
    """A user task to carry out, with its pack vocabulary tags."""

    id: str
    text: str
    language: Language = Language.EN
    app: str = ""
    topic: str = ""
    scenario: Scenario = Scenario.NORMAL

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("instruction text must be non-empty")


@dataclass(frozen=True, slots=True)
class PlanSchedule:
    """Ordered step descriptions plus a cursor at the current item."""

    items: tuple[str, ...] = ()
    cursor: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if not (0 <= self.cursor <= len(self.items)):
            raise ValueError("cursor must lie in [0, len(items)]")

    def with_cursor(self, cursor: int) -> "PlanSchedule":
        return replace(self, cursor=cursor)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.items)

    def current_item(self) -> str:
        if self.exhausted:
            return ""
        return self.items[self.cursor]


@dataclass(frozen=True, slots=True)
class AnnotatedStep:
    """One probed step: agent and critic actions, score, and what executed.

    Constructible in any shape; :func:`validate_step` reports violations.
    """

    index: int
    screenshot: Screenshot
    agent_action: Action
    critic_action: Action | None
    score: int
    executed_action: Action
    plan_item: int = 0
    supplementary: str | None = None


def validate_step(step: AnnotatedStep) -> list[str]:
    """Return every invariant the step violates; empty list iff well-formed.

    Total function: never raises.
    """
    violations: list[str] = []
    if step.score not in (1, 2, 3, 4, 5):
        violations.append("score must be an integer in 1..5")
    if step.index < 0:
        violations.append("step index must be non-negative")
    if step.plan_item < 0:
        violations.append("plan item index must be non-negative")
    if step.score == 5:
        if step.executed_action != step.agent_action:
            violations.append("executed/score mismatch: score 5 requires the agent action")
    elif step.score in (1, 2, 3, 4):
        if step.critic_action is None:
            violations.append("critic action required when score < 5")
        elif step.executed_action != step.critic_action:
            violations.append("executed/score mismatch: score < 5 requires the critic action")
    return violations


@dataclass(frozen=True, slots=True)
class Trajectory:
    """A finished probing run over one instruction."""

    instruction: Instruction
    steps: tuple[AnnotatedStep, ...]
    finished: bool
    plan: PlanSchedule

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def history(self, t: int) -> tuple[AnnotatedStep, ...]:
        """Prefix of steps before step ``t``."""
        return self.steps[:t]

    def contiguous(self) -> bool:
        return all(s.index == i for i, s in enumerate(self.steps))


class EpisodeMode(str, enum.Enum):
    AUTONOMOUS = "AUTONOMOUS"
    ADAPTIVE = "ADAPTIVE"
    INTERACTIVE = "INTERACTIVE"


class EpisodeStatus(str, enum.Enum):
    RUNNING = "RUNNING"
    AWAITING_INTERVENTION = "AWAITING_INTERVENTION"
    DONE_COMPLETE = "DONE_COMPLETE"
    DONE_IMPOSSIBLE = "DONE_IMPOSSIBLE"
    DONE_BUDGET_EXHAUSTED = "DONE_BUDGET_EXHAUSTED"
    ABORTED = "ABORTED"

    @property
    def terminal(self) -> bool:
        return self not in (EpisodeStatus.RUNNING, EpisodeStatus.AWAITING_INTERVENTION)


@dataclass(frozen=True, slots=True)
class EpisodeState:
    """Immutable snapshot of a live episode, as exposed by the service."""

    instruction: Instruction
    mode: EpisodeMode
    gamma: float
    history: tuple[AnnotatedStep, ...] = ()
    step_budget: int = 10
    status: EpisodeStatus = EpisodeStatus.RUNNING

    def __post_init__(self) -> None:
        object.__setattr__(self, "history", tuple(self.history))
        if self.step_budget < 0:
            raise ValueError("step budget must be non-negative")
