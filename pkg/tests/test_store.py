import json

import pytest

from stepgate.core import (
    Action,
    AnnotatedStep,
    Instruction,
    PlanSchedule,
    ScreenDims,
    Screenshot,
    Trajectory,
)
from stepgate.errors import CorruptRecord, EmptyDataset, UnknownInstruction, ValidationFailed
from stepgate.store import (
    Dataset,
    action_from_doc,
    action_to_doc,
    dumps_canonical,
    load_instruction_pack,
    save_instruction_pack,
    trajectory_from_doc,
    trajectory_to_doc,
)

DIMS = ScreenDims(1080, 2400)


def make_traj(instruction_id="i1", n_steps=3, payload=b"img"):
    actions = [Action.click(10 * (i + 1), 20) for i in range(n_steps - 1)] + [Action.complete()]
    steps = tuple(
        AnnotatedStep(
            index=i,
            screenshot=Screenshot(id=f"s{i}", dims=DIMS, payload_ref=payload),
            agent_action=a,
            critic_action=None,
            score=5,
            executed_action=a,
            plan_item=min(i, 1),
        )
        for i, a in enumerate(actions)
    )
    return Trajectory(
        instruction=Instruction(id=instruction_id, text="do a thing"),
        steps=steps,
        finished=True,
        plan=PlanSchedule(items=("one", "two"), cursor=2),
    )


class TestActionCodec:
    @pytest.mark.parametrize(
        "action",
        [Action.click(5, 9), Action.scroll("LEFT"), Action.type_text("héllo"),
         Action.press_back(), Action.impossible()],
    )
    def test_round_trip(self, action):
        assert action_from_doc(action_to_doc(action)) == action


class TestDataset:
    def test_save_load_round_trip(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        traj = make_traj()
        tid = dataset.save_trajectory(traj)
        loaded = dataset.load_trajectory(tid)
        # payloads are materialized on save; a second save/load is bit-exact
        tid2 = dataset.save_trajectory(loaded)
        assert dataset.load_trajectory(tid2) == loaded
        assert loaded.instruction == traj.instruction
        assert loaded.finished and len(loaded.steps) == 3

    def test_ids_are_stable_and_appended(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        first = dataset.save_trajectory(make_traj())
        second = dataset.save_trajectory(make_traj())
        assert (first, second) == ("t000001", "t000002")

    def test_validation_failed_on_bad_step(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        traj = make_traj()
        bad_step = AnnotatedStep(
            index=0,
            screenshot=traj.steps[0].screenshot,
            agent_action=Action.click(1, 1),
            critic_action=None,
            score=2,  # critic action required
            executed_action=Action.click(1, 1),
        )
        bad = Trajectory(
            instruction=traj.instruction, steps=(bad_step,), finished=False,
            plan=traj.plan,
        )
        with pytest.raises(ValidationFailed):
            dataset.save_trajectory(bad)

    def test_corrupt_record_line_number(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        dataset.save_trajectory(make_traj())
        log = tmp_path / "ds" / "trajectories.jsonl"
        log.write_text(log.read_text() + '{"broken": \n', encoding="utf-8")
        with pytest.raises(CorruptRecord) as err:
            list(dataset.iter_trajectories())
        assert err.value.line_no == 2

    def test_truncated_final_line(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        dataset.save_trajectory(make_traj())
        log = tmp_path / "ds" / "trajectories.jsonl"
        log.write_bytes(log.read_bytes()[:-10])
        with pytest.raises(CorruptRecord):
            list(dataset.iter_trajectories())

    def test_stats_and_manifest_agree(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        assert dataset.stats() == {"trajectories": 0, "screens": 0, "goals": 0}
        dataset.save_trajectory(make_traj("a", 3))
        dataset.save_trajectory(make_traj("b", 4))
        dataset.save_trajectory(make_traj("a", 2))
        counts = dataset.stats()
        assert counts == {"trajectories": 3, "screens": 9, "goals": 2}
        assert dataset.manifest.counts == counts

    def test_additivity(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        before = dataset.stats()
        dataset.save_trajectory(make_traj(n_steps=3))
        after = dataset.stats()
        assert after["trajectories"] == before["trajectories"] + 1
        assert after["screens"] == before["screens"] + 3

    def test_content_addressing_dedups_payloads(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        dataset.save_trajectory(make_traj("a", payload=b"same"))
        dataset.save_trajectory(make_traj("b", payload=b"same"))
        shots = list((tmp_path / "ds" / "shots").iterdir())
        assert len(shots) == 1

    def test_resolve_payload(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        tid = dataset.save_trajectory(make_traj(payload=b"pixels"))
        loaded = dataset.load_trajectory(tid)
        assert dataset.resolve_payload(loaded.steps[0].screenshot) == b"pixels"

    def test_unknown_id(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        with pytest.raises(UnknownInstruction):
            dataset.load_trajectory("t999999")

    def test_split_recorded_in_manifest(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        ids = [dataset.save_trajectory(make_traj(f"i{n}")) for n in range(5)]
        dataset.set_split(ids[:4], ids[4:], seed=3)
        split = dataset.manifest.split
        assert split["seed"] == 3
        assert len(split["train_ids"]) == 4 and len(split["test_ids"]) == 1

    def test_split_must_partition(self, tmp_path):
        dataset = Dataset.create(tmp_path / "ds")
        ids = [dataset.save_trajectory(make_traj(f"i{n}")) for n in range(3)]
        with pytest.raises(ValidationFailed):
            dataset.set_split(ids, ids[:1], seed=0)
        with pytest.raises(ValidationFailed):
            dataset.set_split(ids[:1], [], seed=0)

    def test_canonical_dump_stable(self):
        traj = make_traj(payload=b"img")
        doc = trajectory_to_doc(
            Trajectory(
                instruction=traj.instruction,
                steps=tuple(
                    AnnotatedStep(
                        index=s.index,
                        screenshot=Screenshot(s.screenshot.id, s.screenshot.dims, "shots/fixed.bin"),
                        agent_action=s.agent_action,
                        critic_action=s.critic_action,
                        score=s.score,
                        executed_action=s.executed_action,
                        plan_item=s.plan_item,
                    )
                    for s in traj.steps
                ),
                finished=traj.finished,
                plan=traj.plan,
            )
        )
        line = dumps_canonical(doc)
        reparsed = trajectory_from_doc(json.loads(line))
        assert dumps_canonical(trajectory_to_doc(reparsed)) == line

    def test_doc_round_trip_preserves_fields(self):
        traj = make_traj()
        materialized = Trajectory(
            instruction=traj.instruction,
            steps=tuple(
                AnnotatedStep(
                    index=s.index,
                    screenshot=Screenshot(s.screenshot.id, s.screenshot.dims, "shots/x.bin"),
                    agent_action=s.agent_action,
                    critic_action=s.critic_action,
                    score=s.score,
                    executed_action=s.executed_action,
                    plan_item=s.plan_item,
                    supplementary="note",
                )
                for s in traj.steps
            ),
            finished=traj.finished,
            plan=traj.plan,
        )
        assert trajectory_from_doc(trajectory_to_doc(materialized)) == materialized


class TestInstructionPack:
    def test_round_trip(self, tmp_path):
        pack = [
            Instruction(id="a", text="do", app="shop", topic="shopping"),
            Instruction(id="b", text="it", app="notes", topic="productivity"),
        ]
        path = tmp_path / "pack.json"
        save_instruction_pack(pack, path)
        assert load_instruction_pack(path) == pack

    def test_empty_pack_rejected(self, tmp_path):
        path = tmp_path / "pack.json"
        path.write_text("[]")
        with pytest.raises(EmptyDataset):
            load_instruction_pack(path)

    def test_demo_pack_contents(self, demo_instructions):
        assert len(demo_instructions) == 10
        assert {i.id for i in demo_instructions} == {f"demo-{n:02d}" for n in range(1, 11)}

    def test_demo_dataset_stats(self, demo_dataset):
        assert demo_dataset.stats() == {"trajectories": 10, "screens": 42, "goals": 10}
