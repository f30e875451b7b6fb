import pytest

from stepgate.backends import CallOptions, ScriptedBackend
from stepgate.core import (
    Action,
    AnnotatedStep,
    Instruction,
    PlanSchedule,
    Scenario,
    ScreenDims,
    Screenshot,
    Trajectory,
)
from stepgate.env import SimEnv
from stepgate.probing import ProbeCaps, probe_instruction, refine_trajectory
from stepgate.store import dumps_canonical, trajectory_to_doc

from test_env import tiny_app

FAST = CallOptions(retries=3, backoff=0.0)
INSTR = Instruction(id="find-milk", text="Search for milk")


def critic_script(plan: str, steps: list[tuple[str, str, str, str]]) -> ScriptedBackend:
    """Build a critic reply queue: plan, then (supervise, score, phase, done) per step."""
    replies = [plan]
    for supervise, score, phase, done in steps:
        replies += [supervise, score, phase, done]
    return ScriptedBackend(replies)


class TestProbeInstruction:
    def test_all_correct_three_steps(self):
        agent = ScriptedBackend(["CLICK <500, 300>", "TYPE [milk]", "COMPLETE"])
        critic = critic_script(
            "1. Open search\n2. Type milk",
            [
                ("CLICK <500, 300>", "5", "1", "no"),
                ("TYPE [milk]", "5", "2", "no"),
                ("COMPLETE", "5", "2", "yes"),
            ],
        )
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), ProbeCaps(), options=FAST)
        traj = result.trajectory
        assert not result.aborted
        assert traj.finished
        assert len(traj.steps) == 3
        assert all(s.executed_action == s.agent_action for s in traj.steps)
        assert all(s.score == 5 for s in traj.steps)
        assert [s.plan_item for s in traj.steps] == [0, 1, 2]

    def test_wrong_step_executes_critic_action(self):
        agent = ScriptedBackend(["CLICK <500, 300>", "SCROLL [UP]", "COMPLETE"])
        critic = critic_script(
            "1. Open search\n2. Type milk",
            [
                ("CLICK <500, 300>", "5", "1", "no"),
                ("TYPE [milk]", "2", "2", "no"),
                ("COMPLETE", "5", "2", "yes"),
            ],
        )
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), ProbeCaps(), options=FAST)
        traj = result.trajectory
        step = traj.steps[1]
        assert step.score == 2
        assert step.agent_action == Action.scroll("UP")
        assert step.executed_action == step.critic_action == Action.type_text("milk")
        assert traj.finished

    def test_phase_retry_then_advance(self):
        agent = ScriptedBackend(
            ["CLICK <10, 10>", "CLICK <10, 10>", "CLICK <500, 300>", "COMPLETE"]
        )
        critic = critic_script(
            "1. Open search\n2. Finish up",
            [
                ("SCROLL [UP]", "2", "0", "no"),   # stuck: phase stays at cursor
                ("SCROLL [UP]", "2", "0", "no"),   # stuck again
                ("CLICK <500, 300>", "5", "1", "no"),
                ("COMPLETE", "5", "2", "yes"),
            ],
        )
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), ProbeCaps(), options=FAST)
        traj = result.trajectory
        assert [s.plan_item for s in traj.steps] == [0, 0, 0, 1]
        assert traj.finished

    def test_retry_cap_forces_advance(self):
        agent = ScriptedBackend(["CLICK <10, 10>"] * 3)
        critic = critic_script(
            "1. Open search\n2. Finish up",
            [
                ("SCROLL [UP]", "2", "0", "no"),
                ("SCROLL [UP]", "2", "0", "no"),
                ("SCROLL [UP]", "2", "0", "no"),
            ],
        )
        caps = ProbeCaps(max_steps=3, max_retries_per_plan_item=1)
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), caps, options=FAST)
        # retries exceed the cap after the second stuck step, so the third
        # step starts on the next plan item
        assert [s.plan_item for s in result.trajectory.steps] == [0, 0, 1]

    def test_budget_exhaustion(self):
        agent = ScriptedBackend(["CLICK <10, 10>"] * 4)
        critic = critic_script(
            "1. Open search",
            [("SCROLL [UP]", "2", "0", "no")] * 4,
        )
        caps = ProbeCaps(max_steps=4)
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), caps, options=FAST)
        assert not result.trajectory.finished
        assert len(result.trajectory.steps) == caps.max_steps

    def test_malformed_agent_scores_one_and_critic_executes(self):
        agent = ScriptedBackend(["???"] * 4 + ["COMPLETE"])
        critic = critic_script(
            "1. Open search",
            [
                ("CLICK <500, 300>", "ignored-not-consumed", "1", "no"),
                ("COMPLETE", "5", "1", "yes"),
            ],
        )
        # score reply for the malformed step is never requested; rebuild the
        # critic queue without it
        critic = ScriptedBackend(
            ["1. Open search",
             "CLICK <500, 300>", "1", "no",
             "COMPLETE", "5", "1", "yes"]
        )
        result = probe_instruction(INSTR, agent, critic, SimEnv(tiny_app()), ProbeCaps(), options=FAST)
        step = result.trajectory.steps[0]
        assert step.score == 1
        assert step.executed_action == step.critic_action == Action.click(500, 300)
        assert step.agent_action == Action.impossible()
        assert "unparseable" in (step.supplementary or "")

    def test_backend_failure_aborts_when_asked(self):
        agent = ScriptedBackend(["CLICK <500, 300>"])  # runs out on step 2
        critic = critic_script(
            "1. Open search\n2. Type milk",
            [("CLICK <500, 300>", "5", "1", "no"), ("TYPE [milk]", "5", "2", "no")],
        )
        result = probe_instruction(
            INSTR, agent, critic, SimEnv(tiny_app()),
            ProbeCaps(stop_on_backend_error=True), options=CallOptions(retries=0),
        )
        assert result.aborted
        assert len(result.trajectory.steps) == 1
        assert not result.trajectory.finished

    def test_backend_failure_raises_otherwise(self):
        from stepgate.errors import BackendUnavailable

        agent = ScriptedBackend([])
        critic = critic_script("1. Open search", [])
        with pytest.raises(BackendUnavailable):
            probe_instruction(
                INSTR, agent, critic, SimEnv(tiny_app()),
                ProbeCaps(stop_on_backend_error=False), options=CallOptions(retries=0),
            )


def make_step(i, score=5, agent=None, critic=None, executed=None, plan_item=0):
    agent = agent or Action.click(10, 10)
    shot = Screenshot(id=f"s{i}", dims=ScreenDims(100, 200), payload_ref="shots/x.bin")
    return AnnotatedStep(i, shot, agent, critic, score, executed or agent, plan_item=plan_item)


def make_traj(steps, items=("a", "b")):
    return Trajectory(
        instruction=Instruction(id="t", text="x", scenario=Scenario.NORMAL),
        steps=tuple(steps),
        finished=True,
        plan=PlanSchedule(items=items, cursor=len(items)),
    )


class TestRefine:
    def test_well_formed_is_fixed_point(self):
        traj = make_traj([make_step(0), make_step(1)])
        result = refine_trajectory(traj)
        assert result.trajectory is traj
        assert not result.rejected and not result.dropped

    def test_executed_rewritten_for_score_five(self):
        critic = Action.click(99, 99)
        bad = make_step(0, score=5, critic=critic, executed=critic)
        result = refine_trajectory(make_traj([bad, make_step(1)]))
        assert result.trajectory.steps[0].executed_action == bad.agent_action

    def test_executed_rewritten_for_low_score(self):
        critic = Action.click(99, 99)
        bad = make_step(0, score=3, critic=critic, executed=Action.click(10, 10))
        result = refine_trajectory(make_traj([bad, make_step(1)]))
        assert result.trajectory.steps[0].executed_action == critic

    def test_unrepairable_steps_dropped_and_reindexed(self):
        bad = make_step(1, score=3, critic=None)  # critic required but absent
        result = refine_trajectory(
            make_traj([make_step(0), bad, make_step(2), make_step(3), make_step(4)])
        )
        assert result.trajectory is not None
        assert [s.index for s in result.trajectory.steps] == [0, 1, 2, 3]
        assert result.dropped and result.dropped[0][0] == 1

    def test_majority_malformed_rejected(self):
        steps = [make_step(i, score=2, critic=None) for i in range(3)]
        steps += [make_step(3), make_step(4)]
        result = refine_trajectory(make_traj(steps))
        assert result.rejected
        assert result.trajectory is None
        assert "3 of 5" in result.reasons[0]

    def test_plan_alignment_out_of_range_rejects(self):
        result = refine_trajectory(make_traj([make_step(0, plan_item=7)]))
        assert result.rejected


class TestDemoPackProbing:
    def _probe_all(self, demo_dir, demo_app, demo_instructions):
        agent = ScriptedBackend.from_file(demo_dir / "scripts" / "agent.txt")
        critic = ScriptedBackend.from_file(demo_dir / "scripts" / "critic.txt")
        out = []
        for instruction in demo_instructions:
            result = probe_instruction(
                instruction, agent, critic, SimEnv(demo_app), ProbeCaps(), options=FAST
            )
            refined = refine_trajectory(result.trajectory)
            assert refined.trajectory is not None
            out.append(refined.trajectory)
        return out

    def test_deterministic_across_runs(self, demo_dir, demo_app, demo_instructions):
        first = self._probe_all(demo_dir, demo_app, demo_instructions)
        second = self._probe_all(demo_dir, demo_app, demo_instructions)
        a = [dumps_canonical(trajectory_to_doc(t)) for t in first]
        b = [dumps_canonical(trajectory_to_doc(t)) for t in second]
        assert a == b

    def test_score_concentration_by_scenario(self, demo_dir, demo_app, demo_instructions):
        trajectories = self._probe_all(demo_dir, demo_app, demo_instructions)
        low = []
        for traj in trajectories:
            for step in traj.steps:
                if step.score < 5:
                    low.append((traj.instruction.id, step.index, traj.instruction.scenario))
                else:
                    assert traj.instruction.scenario == Scenario.NORMAL or step.index != 3
        assert low == [("demo-03", 3, Scenario.INTERRUPTION)]

    def test_seeded_complex_step_executes_critic_action(self, demo_dir, demo_app, demo_instructions):
        trajectories = self._probe_all(demo_dir, demo_app, demo_instructions)
        complex_traj = next(t for t in trajectories if t.instruction.id == "demo-03")
        step = complex_traj.steps[3]
        assert step.score < 5
        assert step.agent_action == Action.scroll("UP")
        assert step.executed_action == step.critic_action == Action.click(146, 357)


class TestReplayValidation:
    def test_executed_actions_reproduce_screenshot_ids(self, demo_app, demo_dataset):
        """Replaying a stored trajectory's executed actions against a fresh
        sim reproduces the recorded screenshot ids step for step."""
        for traj in demo_dataset.load_all():
            env = SimEnv(demo_app)
            env.reset()
            for step in traj.steps:
                shot = env.screenshot()
                assert shot.id == step.screenshot.id, (traj.instruction.id, step.index)
                env.apply(step.executed_action)
