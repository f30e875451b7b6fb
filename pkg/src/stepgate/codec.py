"""The textual action grammar and the step-matching predicates.

Wire surface forms, used bit-exactly in prompts, logs, and the device
protocol::

    CLICK <616, 371>
    SCROLL [UP]
    TYPE [milk]
    PRESS_BACK | PRESS_HOME | COMPLETE | IMPOSSIBLE

Confidence-integrated model output is two lines::

    ACTION: CLICK <616, 371>
    SCORE: 5
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .core import Action, ActionKind, ScreenDims, ScrollDir
from .errors import MalformedAction, MalformedScore

_VERB_RE = re.compile(r"^([A-Za-z_]+)\s*(.*)$", re.S)
_CLICK_ARGS_RE = re.compile(r"^<\s*(-?\d+)\s*,\s*(-?\d+)\s*>$")
_BRACKET_ARGS_RE = re.compile(r"^\[(.*)\]$", re.S)

_BARE_VERBS = {
    "PRESS_BACK": Action.press_back,
    "PRESS_HOME": Action.press_home,
    "COMPLETE": Action.complete,
    "IMPOSSIBLE": Action.impossible,
}


def parse_action(text: str) -> Action:
    """Parse one action line. Tolerates surrounding whitespace and verb case.

    Raises :class:`MalformedAction` on unknown verbs, wrong or missing
    arguments, and non-integer or negative coordinates.
    """
    line = text.strip()
    m = _VERB_RE.match(line)
    if not m:
        raise MalformedAction(f"not an action: {text!r}")
    verb, rest = m.group(1).upper(), m.group(2).strip()

    if verb == "CLICK":
        args = _CLICK_ARGS_RE.match(rest)
        if not args:
            raise MalformedAction(f"CLICK needs integer coordinates '<x, y>', got {rest!r}")
        x, y = int(args.group(1)), int(args.group(2))
        if x < 0 or y < 0:
            raise MalformedAction("CLICK coordinates must be non-negative")
        return Action.click(x, y)

    if verb == "SCROLL":
        args = _BRACKET_ARGS_RE.match(rest)
        if not args:
            raise MalformedAction(f"SCROLL needs a direction '[DIR]', got {rest!r}")
        direction = args.group(1).strip().upper()
        if direction not in ScrollDir.__members__:
            raise MalformedAction(f"unknown scroll direction {args.group(1)!r}")
        return Action.scroll(direction)

    if verb == "TYPE":
        args = _BRACKET_ARGS_RE.match(rest)
        if args is None:
            raise MalformedAction(f"TYPE needs bracketed text '[text]', got {rest!r}")
        try:
            return Action.type_text(args.group(1))
        except ValueError as exc:
            raise MalformedAction(str(exc)) from exc

    if verb in _BARE_VERBS:
        if rest:
            raise MalformedAction(f"{verb} takes no arguments, got {rest!r}")
        return _BARE_VERBS[verb]()

    raise MalformedAction(f"unknown verb {verb!r}")


def serialize_action(action: Action) -> str:
    """Canonical inverse of :func:`parse_action`."""
    if action.kind is ActionKind.CLICK:
        x, y = action.click_point  # type: ignore[misc]
        return f"CLICK <{x}, {y}>"
    if action.kind is ActionKind.SCROLL:
        return f"SCROLL [{action.scroll_dir.value}]"  # type: ignore[union-attr]
    if action.kind is ActionKind.TYPE:
        return f"TYPE [{action.text}]"
    return action.kind.value


def try_parse_action_lenient(text: str) -> Action | None:
    """Return the first parsable action line of a free-form reply, else None."""
    for line in text.split("\n"):
        line = line.strip()
        if not line:
            continue
        if line.upper().startswith("ACTION:"):
            line = line[len("ACTION:"):].strip()
        try:
            return parse_action(line)
        except MalformedAction:
            continue
    return None


def parse_scored_output(text: str) -> tuple[Action, int]:
    """Split a confidence-integrated reply into (action, score).

    The wire form is two lines, ``ACTION: …`` then ``SCORE: k``. The score
    must be an integer in 1..5; anything else raises :class:`MalformedScore`.
    """
    action_line: str | None = None
    score_line: str | None = None
    for raw in text.split("\n"):
        line = raw.strip()
        upper = line.upper()
        if action_line is None and upper.startswith("ACTION:"):
            action_line = line[len("ACTION:"):].strip()
        elif score_line is None and upper.startswith("SCORE:"):
            score_line = line[len("SCORE:"):].strip()
    if action_line is None:
        raise MalformedAction(f"no ACTION line in {text!r}")
    action = parse_action(action_line)
    if score_line is None:
        raise MalformedScore(f"no SCORE line in {text!r}")
    if not re.fullmatch(r"[+-]?\d+", score_line):
        raise MalformedScore(f"score is not an integer: {score_line!r}")
    score = int(score_line)
    if score not in (1, 2, 3, 4, 5):
        raise MalformedScore(f"score {score} outside 1..5")
    return action, score


def serialize_scored_output(action: Action, score: int) -> str:
    """Canonical inverse of :func:`parse_scored_output`."""
    if score not in (1, 2, 3, 4, 5):
        raise MalformedScore(f"score {score} outside 1..5")
    return f"ACTION: {serialize_action(action)}\nSCORE: {score}"


#: Fraction of the screen width within which a predicted click counts as a hit.
CLICK_RADIUS_FRACTION = 0.14


@dataclass(frozen=True, slots=True)
class StepMatch:
    """Step-granularity agreement: action type, and type plus arguments."""

    type_match: bool
    full_match: bool

    def __post_init__(self) -> None:
        if self.full_match and not self.type_match:
            raise ValueError("full_match implies type_match")


def normalize_typed_text(text: str) -> str:
    """Normalization applied to TYPE text before comparison."""
    return text.strip().casefold()


def match_step(pred: Action, gt: Action, dims: ScreenDims) -> StepMatch:
    """Compare a predicted action against ground truth.

    Type matches iff the kinds are equal (PRESS_BACK and PRESS_HOME are
    distinct). A full match additionally requires, per kind: CLICK within
    14% of the screen width (inclusive boundary, Euclidean distance), TYPE
    text equality after trim + case-fold, SCROLL direction equality. The
    argument-free kinds match on kind alone.
    """
    if pred.kind is not gt.kind:
        return StepMatch(type_match=False, full_match=False)
    if pred.kind is ActionKind.CLICK:
        dist = math.dist(pred.click_point, gt.click_point)  # type: ignore[arg-type]
        full = dist <= CLICK_RADIUS_FRACTION * dims.width
    elif pred.kind is ActionKind.TYPE:
        full = normalize_typed_text(pred.text) == normalize_typed_text(gt.text)  # type: ignore[arg-type]
    elif pred.kind is ActionKind.SCROLL:
        full = pred.scroll_dir is gt.scroll_dir
    else:
        full = True
    return StepMatch(type_match=True, full_match=full)
