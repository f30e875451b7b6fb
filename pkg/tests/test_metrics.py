import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stepgate.core import Action, ScreenDims
from stepgate.errors import EmptyDataset, ValidationFailed
from stepgate.metrics import (
    ConfusionCounts,
    StepRecord,
    classify_intervention,
    eval_dataset,
    hsr_ip_ap,
    relative_efficiency,
    render_report_text,
    report_to_json,
    split_dataset,
)

DIMS = ScreenDims(1000, 2000)


def rec(traj, idx, pred, gt, pred_score=None, gt_score=None):
    return StepRecord(
        trajectory_id=traj,
        step_index=idx,
        pred_action=pred,
        gt_action=gt,
        dims=DIMS,
        pred_score=pred_score,
        gt_score=gt_score,
    )


class TestEvalDataset:
    def test_two_trajectory_example(self):
        hit = Action.press_back()
        records = [rec("a", i, hit, hit) for i in range(3)]
        records += [rec("b", 0, hit, hit), rec("b", 1, hit, hit),
                    rec("b", 2, Action.scroll("UP"), Action.scroll("DOWN"))]
        report = eval_dataset(records)
        assert report.sr == pytest.approx(5 / 6)
        assert report.tsr == pytest.approx(1 / 2)

    def test_type_correct_but_args_wrong(self):
        records = [
            rec("t", i, Action.click(0, 0), Action.click(900, 1500))
            for i in range(4)
        ]
        report = eval_dataset(records)
        assert report.type_acc == 1.0 and report.sr == 0.0 and report.tsr == 0.0

    def test_single_perfect_trajectory(self):
        a = Action.type_text("x")
        report = eval_dataset([rec("t", 0, a, a)])
        assert report.type_acc == report.sr == report.tsr == 1.0

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            eval_dataset([])

    def test_confusion_included_with_gamma(self):
        a = Action.complete()
        records = [rec("t", 0, a, a, pred_score=5, gt_score=2)]
        report = eval_dataset(records, gamma=4)
        assert report.confusion == ConfusionCounts(tp=0, fp=1, tn=0, fn=0)
        assert report.hsr == 0.0 and report.ap == 0.0 and report.ip is None

    def test_kind_grouping(self):
        records = [
            rec("t", 0, Action.press_back(), Action.press_back()),
            rec("t", 1, Action.press_home(), Action.press_home()),
            rec("t", 2, Action.complete(), Action.complete()),
            rec("t", 3, Action.impossible(), Action.impossible()),
        ]
        report = eval_dataset(records)
        assert report.per_kind["PRESS"].total == 2
        assert report.per_kind["STOP"].total == 2
        assert report.per_kind["CLICK"].total == 0


class TestClassifyIntervention:
    def test_examples(self):
        assert classify_intervention(5, 5, 4) == "TP"
        assert classify_intervention(5, 2, 4) == "FP"
        assert classify_intervention(2, 5, 4) == "FN"
        assert classify_intervention(2, 2, 4) == "TN"

    def test_boundary_score_equal_gamma_is_autonomous(self):
        assert classify_intervention(4, 4, 4) == "TP"

    def test_partition(self):
        for pred, gt, gamma in itertools.product(range(1, 6), range(1, 6), range(0, 7)):
            assert classify_intervention(pred, gt, gamma) in {"TP", "FP", "TN", "FN"}


class TestHsrIpAp:
    def test_example(self):
        hsr, ip, ap = hsr_ip_ap(ConfusionCounts(tp=3, tn=2, fp=1, fn=0))
        assert hsr == pytest.approx(5 / 6)
        assert ip == 1.0
        assert ap == pytest.approx(3 / 4)

    def test_all_zero_undefined(self):
        assert hsr_ip_ap(ConfusionCounts()) == (None, None, None)

    def test_partial_undefined(self):
        hsr, ip, ap = hsr_ip_ap(ConfusionCounts(tp=0, tn=10, fp=0, fn=0))
        assert hsr == 1.0 and ip == 1.0 and ap is None

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationFailed):
            ConfusionCounts(tp=-1)


counts = st.integers(min_value=0, max_value=500)


@given(counts, counts, counts, counts)
def test_hsr_ip_ap_property(tp, fp, tn, fn):
    c = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    hsr, ip, ap = hsr_ip_ap(c)
    if c.total:
        assert hsr == pytest.approx(float(Fraction(tp + tn, c.total)))
        assert 0.0 <= hsr <= 1.0
        assert (hsr == 1.0) == (fp == 0 and fn == 0)
    else:
        assert hsr is None
    if tn + fn:
        assert ip == pytest.approx(float(Fraction(tn, tn + fn)))
    else:
        assert ip is None
    if tp + fp:
        assert ap == pytest.approx(float(Fraction(tp, tp + fp)))
    else:
        assert ap is None


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=5),
       st.floats(min_value=0, max_value=6))
def test_classification_consistent_with_counts(pred, gt, gamma):
    cls = classify_intervention(pred, gt, gamma)
    pred_auto, gt_auto = pred >= gamma, gt >= gamma
    expected = {(True, True): "TP", (True, False): "FP",
                (False, False): "TN", (False, True): "FN"}[(pred_auto, gt_auto)]
    assert cls == expected


class TestRelativeEfficiency:
    @pytest.mark.parametrize(
        "human,actual,expected",
        [(229, 302, 0.7583), (229, 397, 0.5768), (229, 359, 0.6379),
         (229, 245, 0.9347), (229, 265, 0.8642)],
    )
    def test_reported_rows(self, human, actual, expected):
        assert relative_efficiency(human, actual) == pytest.approx(expected, abs=5e-5)

    def test_zero_actual(self):
        with pytest.raises(ZeroDivisionError):
            relative_efficiency(10, 0)

    def test_negative_human(self):
        with pytest.raises(ValidationFailed):
            relative_efficiency(-1, 10)


class TestSplit:
    def test_eighty_twenty_on_ten(self):
        train, test = split_dataset(list(range(10)), ratio=0.8, seed=1)
        assert len(train) == 8 and len(test) == 2

    def test_deterministic(self):
        a = split_dataset(list(range(20)), ratio=0.8, seed=5)
        b = split_dataset(list(range(20)), ratio=0.8, seed=5)
        assert a == b

    def test_round_half_up(self):
        train, test = split_dataset(list(range(3)), ratio=0.5, seed=0)
        assert len(train) == 2 and len(test) == 1

    def test_partition(self):
        items = list(range(17))
        train, test = split_dataset(items, ratio=0.8, seed=9)
        assert sorted(train + test) == items
        assert not (set(train) & set(test))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            split_dataset([], ratio=0.8, seed=0)

    def test_bad_ratio(self):
        with pytest.raises(ValidationFailed):
            split_dataset([1, 2], ratio=1.0, seed=0)


class TestRendering:
    def test_json_document(self):
        a = Action.complete()
        report = eval_dataset([rec("t", 0, a, a, pred_score=5, gt_score=5)], gamma=4)
        doc = report_to_json(report)
        assert '"tsr": 1.0' in doc

    def test_text_table_has_columns(self):
        a = Action.complete()
        text = render_report_text(eval_dataset([rec("t", 0, a, a)]))
        for column in ("SCROLL", "PRESS", "STOP", "CLICK", "TYPE", "Total", "TSR"):
            assert column in text

    def test_with_re(self):
        a = Action.complete()
        report = eval_dataset([rec("t", 0, a, a)]).with_re(0.8642)
        assert "RE" in render_report_text(report)
