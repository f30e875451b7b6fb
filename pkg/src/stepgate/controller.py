"""Confidence-driven interaction: gate each step on the threshold gamma.

A policy emits (action, score) pairs. Scores below gamma hand the step to
an intervention source (human console, oracle model, or recorded ground
truth); scores at or above gamma execute autonomously. gamma=0 therefore
reproduces a fully autonomous agent and gamma=6 a fully interactive one.
"""

from __future__ import annotations

import enum
import itertools
import uuid
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

from .backends import Backend, CallOptions, PromptLibrary, agent_predict_scored
from .codec import serialize_action
from .core import (
    Action,
    ActionKind,
    AnnotatedStep,
    EpisodeMode,
    EpisodeStatus,
    Instruction,
    Screenshot,
    Trajectory,
)
from .env import Env
from .errors import InterventionTimeout, UnknownInstruction
from .metrics import StepRecord

__all__ = [
    "Decision",
    "decide",
    "InterventionRequest",
    "InterventionResponse",
    "InterventionSource",
    "OracleSource",
    "QueueSource",
    "EpisodeCaps",
    "EpisodeStepRecord",
    "EpisodeResult",
    "run_episode",
    "ReplayContext",
    "Policy",
    "BackendPolicy",
    "EchoPolicy",
    "ScriptedPolicy",
    "replay_static",
]


class Decision(str, enum.Enum):
    AUTONOMOUS = "AUTONOMOUS"
    INTERACTIVE = "INTERACTIVE"


def decide(score: int, gamma: float) -> Decision:
    """Gate rule: intervene iff the confidence score is strictly below gamma."""
    return Decision.INTERACTIVE if score < gamma else Decision.AUTONOMOUS


class InterventionSourceKind(str, enum.Enum):
    HUMAN = "HUMAN"
    ORACLE = "ORACLE"
    GROUND_TRUTH = "GROUND_TRUTH"


@dataclass(frozen=True, slots=True)
class InterventionRequest:
    """A stalled step waiting for corrective guidance."""

    episode_id: str
    request_id: str
    step_index: int
    screenshot: Screenshot
    proposed_action: Action
    confidence: int
    plan_item: str = ""


@dataclass(frozen=True, slots=True)
class InterventionResponse:
    """The guidance that resumes a stalled step."""

    request_id: str
    action: Action
    source: InterventionSourceKind


class InterventionSource(Protocol):
    def request(self, req: InterventionRequest, timeout: float | None) -> InterventionResponse:
        """Block until guidance arrives; raise InterventionTimeout otherwise."""


class OracleSource:
    """Derives the corrective action from a callable (an oracle model hook)."""

    def __init__(
        self,
        resolve: Callable[[InterventionRequest], Action],
        kind: InterventionSourceKind = InterventionSourceKind.ORACLE,
    ):
        self._resolve = resolve
        self._kind = kind

    def request(self, req: InterventionRequest, timeout: float | None) -> InterventionResponse:
        return InterventionResponse(request_id=req.request_id, action=self._resolve(req), source=self._kind)


class QueueSource:
    """Feeds a fixed sequence of corrective actions; raises when exhausted."""

    def __init__(self, actions: Sequence[Action], kind: InterventionSourceKind = InterventionSourceKind.ORACLE):
        self._actions = list(actions)
        self._kind = kind

    def request(self, req: InterventionRequest, timeout: float | None) -> InterventionResponse:
        if not self._actions:
            raise InterventionTimeout("no scripted intervention left")
        return InterventionResponse(
            request_id=req.request_id, action=self._actions.pop(0), source=self._kind
        )


@dataclass(frozen=True, slots=True)
class EpisodeCaps:
    """Budget and patience limits for one live episode."""

    max_steps: int = 10
    intervention_timeout: float | None = 300.0


@dataclass(frozen=True, slots=True)
class EpisodeStepRecord:
    """One executed episode step: proposal, gate decision, and outcome."""

    index: int
    screenshot: Screenshot
    proposed_action: Action
    confidence: int
    decision: Decision
    executed_action: Action
    intervened: bool
    source: InterventionSourceKind | None = None

    def as_annotated(self) -> AnnotatedStep:
        return AnnotatedStep(
            index=self.index,
            screenshot=self.screenshot,
            agent_action=self.proposed_action,
            critic_action=self.executed_action if self.intervened else None,
            score=self.confidence,
            executed_action=self.executed_action,
        )


@dataclass(frozen=True, slots=True)
class EpisodeResult:
    """Everything a finished episode yields, with gate counters."""

    instruction: Instruction
    status: EpisodeStatus
    steps: tuple[EpisodeStepRecord, ...]
    gamma: float
    interventions: int
    autonomous_steps: int

    @property
    def executed_steps(self) -> int:
        return len(self.steps)


EventCallback = Callable[[str, dict], None]


def _effective_gamma(mode: EpisodeMode, gamma: float) -> float:
    if mode is EpisodeMode.AUTONOMOUS:
        return 0.0
    if mode is EpisodeMode.INTERACTIVE:
        return 6.0
    return gamma


def run_episode(
    instruction: Instruction,
    policy_backend: Backend,
    env: Env,
    gamma: float,
    intervention_source: InterventionSource,
    caps: EpisodeCaps = EpisodeCaps(),
    mode: EpisodeMode = EpisodeMode.ADAPTIVE,
    library: PromptLibrary | None = None,
    options: CallOptions | None = None,
    episode_id: str | None = None,
    on_event: EventCallback | None = None,
) -> EpisodeResult:
    """Run one confidence-gated episode against an environment.

    Terminates when a COMPLETE or IMPOSSIBLE action executes, the
    environment's goal predicate holds, or the step budget runs out. An
    intervention timeout aborts the episode.
    """
    library = library or PromptLibrary.default()
    options = options or CallOptions()
    episode_id = episode_id or uuid.uuid4().hex
    effective_gamma = _effective_gamma(mode, gamma)
    emit = on_event or (lambda kind, payload: None)

    env.reset()
    steps: list[EpisodeStepRecord] = []
    interventions = 0
    status = EpisodeStatus.DONE_BUDGET_EXHAUSTED
    request_counter = itertools.count()

    for t in range(caps.max_steps):
        shot = env.screenshot()
        emit("step_started", {"step_index": t, "screenshot_id": shot.id})
        proposed, score = agent_predict_scored(
            policy_backend, library, instruction, shot, steps, options
        )
        emit("action_proposed", {"action": serialize_action(proposed), "confidence": score})
        decision = decide(score, effective_gamma)
        emit("decision", {"verdict": decision.value})

        intervened = decision is Decision.INTERACTIVE
        source: InterventionSourceKind | None = None
        if intervened:
            request = InterventionRequest(
                episode_id=episode_id,
                request_id=f"{episode_id}-{next(request_counter)}",
                step_index=t,
                screenshot=shot,
                proposed_action=proposed,
                confidence=score,
            )
            emit(
                "intervention_requested",
                {
                    "request_id": request.request_id,
                    "step_index": t,
                    "screenshot_id": shot.id,
                    "dims": {"width": shot.dims.width, "height": shot.dims.height},
                    "proposed_action": serialize_action(proposed),
                    "confidence": score,
                },
            )
            try:
                response = intervention_source.request(request, caps.intervention_timeout)
            except InterventionTimeout:
                status = EpisodeStatus.ABORTED
                emit("episode_finished", {"status": status.value})
                return EpisodeResult(
                    instruction=instruction,
                    status=status,
                    steps=tuple(steps),
                    gamma=effective_gamma,
                    interventions=interventions,
                    autonomous_steps=len(steps) - interventions,
                )
            executed = response.action
            source = response.source
            interventions += 1
        else:
            executed = proposed

        env.apply(executed)
        emit("action_executed", {"action": serialize_action(executed), "intervened": intervened})
        steps.append(
            EpisodeStepRecord(
                index=t,
                screenshot=shot,
                proposed_action=proposed,
                confidence=score,
                decision=decision,
                executed_action=executed,
                intervened=intervened,
                source=source,
            )
        )

        if executed.kind is ActionKind.COMPLETE:
            status = EpisodeStatus.DONE_COMPLETE
            break
        if executed.kind is ActionKind.IMPOSSIBLE:
            status = EpisodeStatus.DONE_IMPOSSIBLE
            break
        try:
            if env.goal_satisfied(instruction.id):
                status = EpisodeStatus.DONE_COMPLETE
                break
        except UnknownInstruction:
            pass

    emit("episode_finished", {"status": status.value})
    return EpisodeResult(
        instruction=instruction,
        status=status,
        steps=tuple(steps),
        gamma=effective_gamma,
        interventions=interventions,
        autonomous_steps=len(steps) - interventions,
    )


# ---------------------------------------------------------------------------
# Static replay over a recorded dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ReplayContext:
    """Everything a policy may look at when replaying one recorded step."""

    instruction: Instruction
    screenshot: Screenshot
    history: tuple[AnnotatedStep, ...]
    gt_action: Action
    gt_score: int
    step_index: int


class Policy(Protocol):
    def propose(self, ctx: ReplayContext) -> tuple[Action, int]:
        """Return (action, confidence) for one recorded step."""


class BackendPolicy:
    """Queries a confidence-integrated backend with the recorded context."""

    def __init__(self, backend: Backend, library: PromptLibrary | None = None,
                 options: CallOptions | None = None):
        self._backend = backend
        self._library = library or PromptLibrary.default()
        self._options = options or CallOptions()

    def propose(self, ctx: ReplayContext) -> tuple[Action, int]:
        return agent_predict_scored(
            self._backend, self._library, ctx.instruction, ctx.screenshot,
            ctx.history, self._options,
        )


class EchoPolicy:
    """Returns the recorded ground truth; the identity upper bound."""

    def __init__(self, score: int = 5):
        self._score = score

    def propose(self, ctx: ReplayContext) -> tuple[Action, int]:
        return ctx.gt_action, self._score


class ScriptedPolicy:
    """Plays back a fixed list of (action, score) pairs."""

    def __init__(self, moves: Sequence[tuple[Action, int]]):
        self._moves = list(moves)
        self._cursor = 0

    def propose(self, ctx: ReplayContext) -> tuple[Action, int]:
        move = self._moves[self._cursor]
        self._cursor += 1
        return move


def replay_static(
    dataset: Iterable[Trajectory],
    policy: Policy,
    gamma: float,
    substitute_ground_truth: bool = True,
) -> list[StepRecord]:
    """Replay a recorded dataset step by step against a policy.

    The recorded executed action is the ground truth. When the gate fires
    and ``substitute_ground_truth`` is on, the executed (credited) action is
    the ground truth; otherwise the policy's own proposal is credited.
    """
    records: list[StepRecord] = []
    for i, traj in enumerate(dataset):
        traj_id = f"{traj.instruction.id}#{i}"
        for step in traj.steps:
            ctx = ReplayContext(
                instruction=traj.instruction,
                screenshot=step.screenshot,
                history=traj.history(step.index),
                gt_action=step.executed_action,
                gt_score=step.score,
                step_index=step.index,
            )
            proposed, score = policy.propose(ctx)
            decision = decide(score, gamma)
            intervened = decision is Decision.INTERACTIVE
            credited = ctx.gt_action if (intervened and substitute_ground_truth) else proposed
            records.append(
                StepRecord(
                    trajectory_id=traj_id,
                    step_index=step.index,
                    pred_action=credited,
                    gt_action=ctx.gt_action,
                    dims=step.screenshot.dims,
                    pred_score=score,
                    gt_score=ctx.gt_score,
                    proposed_action=proposed,
                    intervened=intervened,
                )
            )
    return records
