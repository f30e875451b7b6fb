"""Evaluation formulas over step records and trajectories.

Step records compare an evaluated action against ground truth; reports
aggregate per action kind (PRESS_BACK/PRESS_HOME share the PRESS column,
COMPLETE/IMPOSSIBLE the STOP column) and per trajectory. Intervention
decisions are scored as a confusion matrix against the threshold gamma:
"autonomous" means score >= gamma on both sides.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .codec import match_step
from .core import ACTION_GROUPS, Action, ScreenDims, Trajectory
from .errors import EmptyDataset, ValidationFailed

__all__ = [
    "ConfusionCounts",
    "StepRecord",
    "KindTally",
    "MetricsReport",
    "classify_intervention",
    "hsr_ip_ap",
    "relative_efficiency",
    "eval_dataset",
    "split_dataset",
    "report_to_json",
    "render_report_text",
]

_GROUP_OF_KIND = {kind: group for group, kinds in ACTION_GROUPS.items() for kind in kinds}
_GROUP_ORDER = ("SCROLL", "PRESS", "STOP", "CLICK", "TYPE")


@dataclass(frozen=True, slots=True)
class ConfusionCounts:
    """Intervention-decision tallies against ground truth."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationFailed("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True, slots=True)
class StepRecord:
    """One evaluated step: the action under test against ground truth.

    ``pred_action`` is what the agent is credited with executing (after any
    ground-truth substitution); ``proposed_action`` keeps the raw policy
    output when the two differ. Scores are present when the policy and the
    annotated dataset provide them.
    """

    trajectory_id: str
    step_index: int
    pred_action: Action
    gt_action: Action
    dims: ScreenDims
    pred_score: int | None = None
    gt_score: int | None = None
    proposed_action: Action | None = None
    intervened: bool = False


@dataclass(frozen=True, slots=True)
class KindTally:
    """Hit counts for one action column."""

    type_hits: int = 0
    full_hits: int = 0
    total: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.full_hits <= self.type_hits <= self.total):
            raise ValidationFailed("tally must satisfy full <= type <= total")

    @property
    def type_acc(self) -> float | None:
        return self.type_hits / self.total if self.total else None

    @property
    def sr(self) -> float | None:
        return self.full_hits / self.total if self.total else None


@dataclass(frozen=True, slots=True)
class MetricsReport:
    """Aggregate evaluation: per-column tallies, overall rates, and the
    intervention confusion when scores were available."""

    per_kind: dict[str, KindTally] = field(default_factory=dict)
    type_acc: float = 0.0
    sr: float = 0.0
    tsr: float = 0.0
    n_steps: int = 0
    n_trajectories: int = 0
    confusion: ConfusionCounts | None = None
    hsr: float | None = None
    ip: float | None = None
    ap: float | None = None
    re: float | None = None

    def with_re(self, re: float) -> "MetricsReport":
        return replace(self, re=re)


def classify_intervention(pred_score: int, gt_score: int, gamma: float) -> str:
    """Classify one gating decision as TP, FP, TN, or FN.

    Autonomous means score >= gamma (the gate intervenes strictly below).
    TP: both autonomous. TN: both intervene. FP: acted autonomously when
    intervention was needed. FN: intervened when autonomy sufficed.
    """
    pred_auto = pred_score >= gamma
    gt_auto = gt_score >= gamma
    if pred_auto and gt_auto:
        return "TP"
    if pred_auto and not gt_auto:
        return "FP"
    if not pred_auto and not gt_auto:
        return "TN"
    return "FN"


def hsr_ip_ap(c: ConfusionCounts) -> tuple[float | None, float | None, float | None]:
    """Decision accuracy, intervention precision, and autonomy precision.

    HSR = (TP+TN)/(TP+TN+FP+FN); IP = TN/(TN+FN); AP = TP/(TP+FP).
    A rate whose denominator is zero is reported as None, never as 0.
    """
    hsr = (c.tp + c.tn) / c.total if c.total else None
    ip = c.tn / (c.tn + c.fn) if (c.tn + c.fn) else None
    ap = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    return hsr, ip, ap


def relative_efficiency(human_steps: int, actual_steps: int) -> float:
    """Human-optimal step count over the agent's actual step count."""
    if actual_steps <= 0:
        raise ZeroDivisionError("actual step count must be positive")
    if human_steps < 0:
        raise ValidationFailed("human step count must be non-negative")
    return human_steps / actual_steps


def eval_dataset(records: Iterable[StepRecord], gamma: float | None = None) -> MetricsReport:
    """Aggregate step records into a report.

    Type is the mean of type matches, SR the mean of full matches, and TSR
    the fraction of trajectories whose every step fully matches. When gamma
    is given and records carry both scores, the intervention confusion and
    HSR/IP/AP are included.
    """
    records = list(records)
    if not records:
        raise EmptyDataset("no step records to evaluate")

    tallies: dict[str, list[int]] = {group: [0, 0, 0] for group in _GROUP_ORDER}
    per_traj_ok: dict[str, bool] = {}
    type_hits = full_hits = 0
    tp = fp = tn = fn = 0
    scored = 0

    for rec in records:
        m = match_step(rec.pred_action, rec.gt_action, rec.dims)
        group = _GROUP_OF_KIND[rec.gt_action.kind]
        tally = tallies[group]
        tally[0] += m.type_match
        tally[1] += m.full_match
        tally[2] += 1
        type_hits += m.type_match
        full_hits += m.full_match
        per_traj_ok[rec.trajectory_id] = per_traj_ok.get(rec.trajectory_id, True) and m.full_match
        if gamma is not None and rec.pred_score is not None and rec.gt_score is not None:
            scored += 1
            cls = classify_intervention(rec.pred_score, rec.gt_score, gamma)
            tp += cls == "TP"
            fp += cls == "FP"
            tn += cls == "TN"
            fn += cls == "FN"

    n = len(records)
    confusion = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn) if scored else None
    hsr, ip, ap = hsr_ip_ap(confusion) if confusion else (None, None, None)
    return MetricsReport(
        per_kind={
            group: KindTally(type_hits=t[0], full_hits=t[1], total=t[2])
            for group, t in tallies.items()
        },
        type_acc=type_hits / n,
        sr=full_hits / n,
        tsr=sum(per_traj_ok.values()) / len(per_traj_ok),
        n_steps=n,
        n_trajectories=len(per_traj_ok),
        confusion=confusion,
        hsr=hsr,
        ip=ip,
        ap=ap,
    )


def split_dataset(
    trajectories: Sequence[Trajectory] | Sequence[str],
    ratio: float = 0.8,
    seed: int = 0,
) -> tuple[list, list]:
    """Random train/test partition by whole trajectory, never by step.

    The train side gets round-half-up(ratio * n) items; the same seed always
    produces the same split.
    """
    items = list(trajectories)
    if not items:
        raise EmptyDataset("cannot split an empty dataset")
    if not (0.0 < ratio < 1.0):
        raise ValidationFailed("split ratio must lie strictly between 0 and 1")
    order = list(range(len(items)))
    random.Random(seed).shuffle(order)
    n_train = int(ratio * len(items) + 0.5)
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


def _fmt_rate(value: float | None) -> str:
    return f"{100.0 * value:6.2f}" if value is not None else "     /"


def report_to_json(report: MetricsReport) -> str:
    """Table-per-action JSON rendering of a report."""
    doc = {
        "actions": {
            group: {
                "type": tally.type_acc,
                "sr": tally.sr,
                "total": tally.total,
            }
            for group, tally in report.per_kind.items()
        },
        "total": {"type": report.type_acc, "sr": report.sr},
        "tsr": report.tsr,
        "n_steps": report.n_steps,
        "n_trajectories": report.n_trajectories,
        "confusion": (
            {
                "tp": report.confusion.tp,
                "fp": report.confusion.fp,
                "tn": report.confusion.tn,
                "fn": report.confusion.fn,
            }
            if report.confusion
            else None
        ),
        "hsr": report.hsr,
        "ip": report.ip,
        "ap": report.ap,
        "re": report.re,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def render_report_text(report: MetricsReport) -> str:
    """Plain-text table: one column per action group, then totals."""
    lines = []
    header = f"{'':8}" + "".join(f"{g:>12}" for g in _GROUP_ORDER) + f"{'Total':>12}"
    lines.append(header)
    type_row = f"{'Type %':8}"
    sr_row = f"{'SR %':8}"
    for group in _GROUP_ORDER:
        tally = report.per_kind.get(group, KindTally())
        type_row += f"{_fmt_rate(tally.type_acc):>12}"
        sr_row += f"{_fmt_rate(tally.sr):>12}"
    type_row += f"{_fmt_rate(report.type_acc):>12}"
    sr_row += f"{_fmt_rate(report.sr):>12}"
    lines.append(type_row)
    lines.append(sr_row)
    lines.append(f"{'TSR %':8}{_fmt_rate(report.tsr):>12}")
    if report.hsr is not None:
        lines.append(
            f"{'HSR %':8}{_fmt_rate(report.hsr):>12}"
            f"   IP {_fmt_rate(report.ip)}   AP {_fmt_rate(report.ap)}"
        )
    if report.re is not None:
        lines.append(f"{'RE %':8}{_fmt_rate(report.re):>12}")
    return "\n".join(lines)
