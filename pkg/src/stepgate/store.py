"""Persistence: instruction packs, trajectory datasets, and reports.

A dataset is a directory::

    <dataset>/manifest.json        # name, created_at, counts, optional split
    <dataset>/trajectories.jsonl   # one JSON object per line, append-only
    <dataset>/shots/<sha256>.bin   # content-addressed screenshot payloads

Records are serialized with sorted keys and fixed separators, so identical
trajectories produce identical bytes. Inline screenshot bytes are
materialized into the content-addressed store on save; path references are
kept verbatim, which makes save/load a bit-exact round trip for them.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .core import (
    Action,
    ActionKind,
    AnnotatedStep,
    Instruction,
    Language,
    PlanSchedule,
    Scenario,
    ScreenDims,
    Screenshot,
    ScrollDir,
    Trajectory,
    validate_step,
)
from .errors import CorruptRecord, EmptyDataset, UnknownInstruction, ValidationFailed

__all__ = [
    "DatasetManifest",
    "Dataset",
    "action_to_doc",
    "action_from_doc",
    "trajectory_to_doc",
    "trajectory_from_doc",
    "load_instruction_pack",
    "save_instruction_pack",
]


# ---------------------------------------------------------------------------
# JSON codecs (field names mirror the core types verbatim)
# ---------------------------------------------------------------------------

def action_to_doc(action: Action) -> dict:
    doc: dict = {"kind": action.kind.value}
    if action.click_point is not None:
        doc["click_point"] = list(action.click_point)
    if action.scroll_dir is not None:
        doc["scroll_dir"] = action.scroll_dir.value
    if action.text is not None:
        doc["text"] = action.text
    return doc


def action_from_doc(doc: dict) -> Action:
    kind = ActionKind(doc["kind"])
    point = doc.get("click_point")
    return Action(
        kind=kind,
        click_point=tuple(point) if point is not None else None,
        scroll_dir=ScrollDir(doc["scroll_dir"]) if "scroll_dir" in doc else None,
        text=doc.get("text"),
    )


def _screenshot_to_doc(shot: Screenshot) -> dict:
    if not isinstance(shot.payload_ref, str):
        raise ValidationFailed("screenshot payload must be materialized before writing")
    return {
        "id": shot.id,
        "dims": {"width": shot.dims.width, "height": shot.dims.height},
        "payload_ref": shot.payload_ref,
    }


def _screenshot_from_doc(doc: dict) -> Screenshot:
    return Screenshot(
        id=doc["id"],
        dims=ScreenDims(width=doc["dims"]["width"], height=doc["dims"]["height"]),
        payload_ref=doc["payload_ref"],
    )


def instruction_to_doc(instruction: Instruction) -> dict:
    return {
        "id": instruction.id,
        "text": instruction.text,
        "language": instruction.language.value,
        "app": instruction.app,
        "topic": instruction.topic,
        "scenario": instruction.scenario.value,
    }


def instruction_from_doc(doc: dict) -> Instruction:
    return Instruction(
        id=doc["id"],
        text=doc["text"],
        language=Language(doc.get("language", "EN")),
        app=doc.get("app", ""),
        topic=doc.get("topic", ""),
        scenario=Scenario(doc.get("scenario", "NORMAL")),
    )


def _step_to_doc(step: AnnotatedStep) -> dict:
    return {
        "index": step.index,
        "screenshot": _screenshot_to_doc(step.screenshot),
        "agent_action": action_to_doc(step.agent_action),
        "critic_action": action_to_doc(step.critic_action) if step.critic_action else None,
        "score": step.score,
        "executed_action": action_to_doc(step.executed_action),
        "plan_item": step.plan_item,
        "supplementary": step.supplementary,
    }


def _step_from_doc(doc: dict) -> AnnotatedStep:
    return AnnotatedStep(
        index=doc["index"],
        screenshot=_screenshot_from_doc(doc["screenshot"]),
        agent_action=action_from_doc(doc["agent_action"]),
        critic_action=action_from_doc(doc["critic_action"]) if doc.get("critic_action") else None,
        score=doc["score"],
        executed_action=action_from_doc(doc["executed_action"]),
        plan_item=doc.get("plan_item", 0),
        supplementary=doc.get("supplementary"),
    )


def trajectory_to_doc(traj: Trajectory) -> dict:
    return {
        "instruction": instruction_to_doc(traj.instruction),
        "steps": [_step_to_doc(step) for step in traj.steps],
        "finished": traj.finished,
        "plan": {"items": list(traj.plan.items), "cursor": traj.plan.cursor},
    }


def trajectory_from_doc(doc: dict) -> Trajectory:
    return Trajectory(
        instruction=instruction_from_doc(doc["instruction"]),
        steps=tuple(_step_from_doc(s) for s in doc["steps"]),
        finished=doc["finished"],
        plan=PlanSchedule(items=tuple(doc["plan"]["items"]), cursor=doc["plan"]["cursor"]),
    )


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Dataset directory
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Dataset identity and bookkeeping counts."""

    name: str
    created_at: str
    counts: dict[str, int]
    split: dict | None = None

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "created_at": self.created_at,
            "counts": self.counts,
            "split": self.split,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DatasetManifest":
        return cls(
            name=doc["name"],
            created_at=doc["created_at"],
            counts=dict(doc["counts"]),
            split=doc.get("split"),
        )


class Dataset:
    """Append-only trajectory log with a manifest and screenshot store.

    Single writer, any number of readers. Saved ids are stable: re-saving
    an identical trajectory appends a new record under a new id.
    """

    LOG_NAME = "trajectories.jsonl"
    MANIFEST_NAME = "manifest.json"
    SHOTS_DIR = "shots"

    def __init__(self, root: Path):
        self.root = Path(root)
        if not (self.root / self.MANIFEST_NAME).exists():
            raise ValidationFailed(f"{root}: not a dataset (no manifest)")

    # -- creation ----------------------------------------------------------

    @classmethod
    def create(cls, root: Path, name: str | None = None) -> "Dataset":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / cls.SHOTS_DIR).mkdir(exist_ok=True)
        manifest = DatasetManifest(
            name=name or root.name,
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            counts={"trajectories": 0, "screens": 0, "goals": 0},
        )
        (root / cls.MANIFEST_NAME).write_text(
            json.dumps(manifest.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (root / cls.LOG_NAME).touch()
        return cls(root)

    @classmethod
    def open_or_create(cls, root: Path, name: str | None = None) -> "Dataset":
        root = Path(root)
        if (root / cls.MANIFEST_NAME).exists():
            return cls(root)
        return cls.create(root, name)

    # -- manifest ------------------------------------------------------------

    @property
    def manifest(self) -> DatasetManifest:
        doc = json.loads((self.root / self.MANIFEST_NAME).read_text(encoding="utf-8"))
        return DatasetManifest.from_doc(doc)

    def _write_manifest(self, manifest: DatasetManifest) -> None:
        (self.root / self.MANIFEST_NAME).write_text(
            json.dumps(manifest.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def set_split(self, train_ids: list[str], test_ids: list[str], seed: int) -> None:
        overlap = set(train_ids) & set(test_ids)
        if overlap:
            raise ValidationFailed(f"split sides overlap: {sorted(overlap)}")
        known = {tid for tid, _ in self.iter_trajectories()}
        if set(train_ids) | set(test_ids) != known:
            raise ValidationFailed("split ids must partition the dataset's trajectory ids")
        manifest = self.manifest
        manifest.split = {"train_ids": sorted(train_ids), "test_ids": sorted(test_ids), "seed": seed}
        self._write_manifest(manifest)

    # -- screenshots -----------------------------------------------------------

    def materialize_payload(self, shot: Screenshot) -> Screenshot:
        """Content-address the payload into the dataset's shot store.

        References already pointing inside the store are kept verbatim, so a
        loaded trajectory re-saves to identical bytes. External files and
        inline bytes are copied in under their content hash.
        """
        if isinstance(shot.payload_ref, str):
            if shot.payload_ref.startswith(f"{self.SHOTS_DIR}/") and (
                self.root / shot.payload_ref
            ).exists():
                return shot
            data = Path(shot.payload_ref).read_bytes()
        else:
            data = shot.payload_ref
        digest = hashlib.sha256(data).hexdigest()
        rel = f"{self.SHOTS_DIR}/{digest}.bin"
        target = self.root / rel
        if not target.exists():
            target.write_bytes(data)
        return Screenshot(id=shot.id, dims=shot.dims, payload_ref=rel)

    def resolve_payload(self, shot: Screenshot) -> bytes:
        if isinstance(shot.payload_ref, bytes):
            return shot.payload_ref
        path = Path(shot.payload_ref)
        if not path.is_absolute():
            path = self.root / path
        return path.read_bytes()

    # -- trajectories ------------------------------------------------------------

    @staticmethod
    def _id_for_line(line_no: int) -> str:
        return f"t{line_no:06d}"

    def save_trajectory(self, traj: Trajectory) -> str:
        """Validate, append, and return the new trajectory id."""
        problems = []
        for step in traj.steps:
            for violation in validate_step(step):
                problems.append(f"step {step.index}: {violation}")
        if not traj.contiguous():
            problems.append("step indices are not contiguous from 0")
        if problems:
            raise ValidationFailed("; ".join(problems))

        materialized = Trajectory(
            instruction=traj.instruction,
            steps=tuple(
                AnnotatedStep(
                    index=s.index,
                    screenshot=self.materialize_payload(s.screenshot),
                    agent_action=s.agent_action,
                    critic_action=s.critic_action,
                    score=s.score,
                    executed_action=s.executed_action,
                    plan_item=s.plan_item,
                    supplementary=s.supplementary,
                )
                for s in traj.steps
            ),
            finished=traj.finished,
            plan=traj.plan,
        )
        line = dumps_canonical(trajectory_to_doc(materialized))
        log = self.root / self.LOG_NAME
        with open(log, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        with open(log, encoding="utf-8") as fh:
            count = sum(1 for _ in fh)

        manifest = self.manifest
        manifest.counts["trajectories"] += 1
        manifest.counts["screens"] += len(traj.steps)
        manifest.counts["goals"] = len(
            {t.instruction.id for _, t in self.iter_trajectories()}
        )
        self._write_manifest(manifest)
        return self._id_for_line(count)

    def iter_trajectories(self):
        log = self.root / self.LOG_NAME
        with open(log, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.endswith("\n"):
                    raise CorruptRecord(f"truncated record at line {line_no}", line_no=line_no)
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    doc = json.loads(stripped)
                    yield self._id_for_line(line_no), trajectory_from_doc(doc)
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptRecord(
                        f"bad record at line {line_no}: {exc}", line_no=line_no
                    ) from exc

    def load_trajectory(self, traj_id: str) -> Trajectory:
        for tid, traj in self.iter_trajectories():
            if tid == traj_id:
                return traj
        raise UnknownInstruction(f"no trajectory {traj_id!r} in {self.root}")

    def load_all(self) -> list[Trajectory]:
        return [traj for _, traj in self.iter_trajectories()]

    def stats(self) -> dict[str, int]:
        """Counts from a full rescan: trajectories, screens (steps), goals."""
        trajectories = 0
        screens = 0
        goals: set[str] = set()
        for _, traj in self.iter_trajectories():
            trajectories += 1
            screens += len(traj.steps)
            goals.add(traj.instruction.id)
        return {"trajectories": trajectories, "screens": screens, "goals": len(goals)}


# ---------------------------------------------------------------------------
# Instruction packs
# ---------------------------------------------------------------------------

def load_instruction_pack(path: Path) -> list[Instruction]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list) or not doc:
        raise EmptyDataset(f"{path}: instruction pack must be a non-empty JSON array")
    return [instruction_from_doc(item) for item in doc]


def save_instruction_pack(instructions: list[Instruction], path: Path) -> None:
    doc = [instruction_to_doc(i) for i in instructions]
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
