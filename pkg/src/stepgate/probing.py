"""Collaborative probing: drive the agent under a critic to annotate steps.

Per step: the agent proposes an action, the critic proposes its own and
scores the agent's from 1 to 5. A score of 5 executes the agent's action,
anything lower executes the critic's. After executing, the critic locates
the current plan item (an unchanged index means the step is retried, up to
a cap) and judges completion. Refinement then drops or repairs steps whose
annotations are inconsistent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .backends import (
    Backend,
    CallOptions,
    PromptLibrary,
    agent_predict,
    critic_done,
    critic_phase,
    critic_plan,
    critic_score,
    critic_supervise,
)
from .core import Action, AnnotatedStep, Instruction, PlanSchedule, Trajectory, validate_step
from .env import Env
from .errors import BackendUnavailable, MalformedAction

__all__ = ["ProbeCaps", "ProbeResult", "RefineResult", "probe_instruction", "refine_trajectory"]


@dataclass(frozen=True, slots=True)
class ProbeCaps:
    """Budget limits for one probing episode."""

    max_steps: int = 10
    max_retries_per_plan_item: int = 3
    stop_on_backend_error: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1 or self.max_retries_per_plan_item < 1:
            raise ValueError("probe caps must be >= 1")


@dataclass(frozen=True, slots=True)
class ProbeResult:
    """A probed trajectory, possibly cut short by a backend failure."""

    trajectory: Trajectory
    aborted: bool = False
    abort_reason: str | None = None


def probe_instruction(
    instruction: Instruction,
    agent_backend: Backend,
    critic_backend: Backend,
    env: Env,
    caps: ProbeCaps = ProbeCaps(),
    library: PromptLibrary | None = None,
    options: CallOptions | None = None,
    on_step: Callable[[AnnotatedStep], None] | None = None,
) -> ProbeResult:
    """Run one probing episode and return its annotated trajectory.

    Deterministic given scripted backends and a simulated environment.
    """
    library = library or PromptLibrary.default()
    options = options or CallOptions()
    steps: list[AnnotatedStep] = []
    finished = False
    aborted = False
    abort_reason: str | None = None

    try:
        plan = critic_plan(critic_backend, library, instruction, options)
    except BackendUnavailable as exc:
        if not caps.stop_on_backend_error:
            raise
        empty = Trajectory(instruction=instruction, steps=(), finished=False, plan=PlanSchedule())
        return ProbeResult(trajectory=empty, aborted=True, abort_reason=str(exc))

    env.reset()
    cursor = 0
    retries_for_item = 0
    shot = env.screenshot()

    for t in range(caps.max_steps):
        plan_at_step = cursor
        plan_item = plan.items[cursor] if cursor < len(plan.items) else ""
        supplementary: str | None = None
        try:
            try:
                agent_action = agent_predict(
                    agent_backend, library, instruction, shot, steps, options
                )
            except MalformedAction as exc:
                # An unparseable reply cannot be correct to execute: record the
                # refusal marker, force the minimum score, and let the critic act.
                agent_action = None
                supplementary = f"agent reply unparseable: {exc}"
            critic_action = critic_supervise(
                critic_backend, library, instruction, plan_item, shot, steps, options
            )
            if agent_action is None:
                agent_action = Action.impossible()
                score = 1
            else:
                score = critic_score(
                    critic_backend, library, instruction, plan_item, shot,
                    agent_action, critic_action, steps, options,
                )
            executed = agent_action if score == 5 else critic_action
            env.apply(executed)
            shot_after = env.screenshot()
            phase = critic_phase(critic_backend, library, plan, shot_after, options)
            done = critic_done(critic_backend, library, instruction, plan, shot_after, options)
        except BackendUnavailable as exc:
            if not caps.stop_on_backend_error:
                raise
            aborted = True
            abort_reason = str(exc)
            break

        step = AnnotatedStep(
            index=t,
            screenshot=shot,
            agent_action=agent_action,
            critic_action=critic_action,
            score=score,
            executed_action=executed,
            plan_item=plan_at_step,
            supplementary=supplementary,
        )
        steps.append(step)
        if on_step is not None:
            on_step(step)

        if phase == cursor:
            retries_for_item += 1
            if retries_for_item > caps.max_retries_per_plan_item:
                # Reflection loop cap: stop retrying a stuck item and move on.
                cursor = min(cursor + 1, len(plan.items))
                retries_for_item = 0
        else:
            cursor = phase
            retries_for_item = 0

        shot = shot_after
        if done:
            finished = True
            break

    trajectory = Trajectory(
        instruction=instruction,
        steps=tuple(steps),
        finished=finished,
        plan=plan.with_cursor(min(cursor, len(plan.items))),
    )
    return ProbeResult(trajectory=trajectory, aborted=aborted, abort_reason=abort_reason)


@dataclass(frozen=True, slots=True)
class RefineResult:
    """Outcome of trajectory refinement: a clean trajectory or a rejection."""

    trajectory: Trajectory | None
    dropped: tuple[tuple[int, tuple[str, ...]], ...] = ()
    rejected: bool = False
    reasons: tuple[str, ...] = ()


_REJECT_DROP_NUMERATOR = 1
_REJECT_DROP_DENOMINATOR = 5  # reject when dropped fraction exceeds 20%


def refine_trajectory(traj: Trajectory) -> RefineResult:
    """Repair or drop inconsistent steps; reject heavily damaged trajectories.

    The executed action is rewritten to agree with the score (5 keeps the
    agent's action, below 5 the critic's). Steps that cannot be repaired are
    dropped; if more than 20% of steps drop, or plan indices are out of
    order or out of range, the whole trajectory is rejected.
    """
    kept: list[AnnotatedStep] = []
    dropped: list[tuple[int, tuple[str, ...]]] = []
    changed = False

    for step in traj.steps:
        if step.plan_item > len(traj.plan.items):
            return RefineResult(
                trajectory=None,
                rejected=True,
                reasons=(
                    f"step {step.index}: plan item {step.plan_item} outside the "
                    f"{len(traj.plan.items)}-item plan",
                ),
            )

        violations = validate_step(step)
        repairable = [v for v in violations if v.startswith("executed/score mismatch")]
        fatal = [v for v in violations if not v.startswith("executed/score mismatch")]
        if fatal:
            dropped.append((step.index, tuple(violations)))
            continue
        if repairable:
            target = step.agent_action if step.score == 5 else step.critic_action
            step = replace(step, executed_action=target)
            changed = True
        kept.append(step)

    total = len(traj.steps)
    if total and len(dropped) * _REJECT_DROP_DENOMINATOR > total * _REJECT_DROP_NUMERATOR:
        return RefineResult(
            trajectory=None,
            dropped=tuple(dropped),
            rejected=True,
            reasons=(f"{len(dropped)} of {total} steps malformed (over 20%)",),
        )

    if not dropped and not changed:
        return RefineResult(trajectory=traj)

    reindexed = tuple(replace(step, index=i) for i, step in enumerate(kept))
    refined = Trajectory(
        instruction=traj.instruction,
        steps=reindexed,
        finished=traj.finished,
        plan=traj.plan,
    )
    return RefineResult(trajectory=refined, dropped=tuple(dropped))
