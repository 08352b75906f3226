from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_stride
from equigait.data import Gait, Label
from equigait.evaluate import (
    Confusion,
    EvalReport,
    StridePrediction,
    build_report,
    calibrate_session_threshold,
    classify_strides,
    open_unit,
    place_threshold,
    pr_curve,
    score_session,
    select_stride_threshold,
    temporal_histogram,
)
from equigait.nn.model import init_params
from helpers import brute_force_threshold


def _f1_at(scores, labels, t):
    s, y = np.asarray(scores), np.asarray(labels).astype(bool)
    tp = np.sum((s >= t) & y)
    fp = np.sum((s >= t) & ~y)
    fn = np.sum((s < t) & y)
    return 2 * tp / (2 * tp + fp + fn)


def test_stride_threshold_example():
    t, curve = select_stride_threshold([0.2, 0.4, 0.6, 0.8], [0, 0, 1, 1])
    assert t == 0.6
    assert [p.threshold for p in curve] == [0.2, 0.4, 0.6, 0.8]
    assert next(p for p in curve if p.threshold == 0.6).f1 == 1.0


def test_session_threshold_example():
    assert calibrate_session_threshold([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1]) == 0.7


def test_threshold_needs_both_labels():
    with pytest.raises(ValueError, match="both labels"):
        select_stride_threshold([0.1, 0.9], [1, 1])
    with pytest.raises(ValueError, match="both labels"):
        calibrate_session_threshold([0.1, 0.9], [0, 0])


def test_tie_goes_to_largest_threshold():
    # t = 0.2 and t = 0.5 both give F1 = 2/3; the larger one wins
    scores, labels = [0.1, 0.2, 0.3, 0.4, 0.5], [0, 1, 0, 0, 1]
    assert _f1_at(scores, labels, 0.2) == _f1_at(scores, labels, 0.5) == pytest.approx(2 / 3)
    assert select_stride_threshold(scores, labels)[0] == 0.5
    assert brute_force_threshold(scores, labels)[0] == 0.5


@pytest.mark.parametrize("quantize", [False, True])
def test_thresholds_match_brute_force(quantize):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=1000)
        labels[:2] = [0, 1]
        scores = np.clip(rng.normal(0.4 + 0.2 * labels, 0.2), 0, 1)
        if quantize:
            scores = np.round(scores * 20) / 20  # many ties
        t_ref, f1_ref = brute_force_threshold(scores, labels)
        t, curve = select_stride_threshold(scores, labels)
        assert t == t_ref
        assert max(p.f1 for p in curve) == pytest.approx(f1_ref, abs=1e-15)
        assert calibrate_session_threshold(scores, labels) == t_ref


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1, allow_nan=False), st.booleans()), min_size=2, max_size=60))
def test_selected_threshold_beats_default(pairs):
    scores = [s for s, _ in pairs]
    labels = [int(y) for _, y in pairs]
    if len(set(labels)) < 2:
        return
    t, _ = select_stride_threshold(scores, labels)
    assert _f1_at(scores, labels, t) >= _f1_at(scores, labels, 0.5) - 1e-12
    placed = place_threshold(scores, t)
    assert _f1_at(scores, labels, placed) == _f1_at(scores, labels, t)


def test_pr_curve_points():
    curve = pr_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    by_t = {p.threshold: p for p in curve}
    assert by_t[0.35].precision == pytest.approx(2 / 3) and by_t[0.35].recall == 1.0
    assert by_t[0.8].precision == 1.0 and by_t[0.8].recall == 0.5
    for p in curve:
        expected = 2 * p.precision * p.recall / (p.precision + p.recall) if p.precision + p.recall else 0.0
        assert p.f1 == pytest.approx(expected)


# -- threshold placement ---------------------------------------------------------------


def test_placement_midpoint_of_gap():
    scores = [0.01, 0.02, 0.97, 0.99]
    t, _ = select_stride_threshold(scores, [0, 0, 1, 1])
    assert t == 0.97
    assert place_threshold(scores, t) == pytest.approx((0.02 + 0.97) / 2)
    assert place_threshold(scores, t, "candidate") == 0.97


def test_placement_separated_sessions():
    scores = [0.0, 0.0, 0.0, 1.0, 1.0]
    tau = calibrate_session_threshold(scores, [0, 0, 0, 1, 1])
    assert tau == 1.0
    assert place_threshold(scores, tau) == 0.5


def test_placement_at_lowest_score_is_unchanged():
    assert place_threshold([0.2, 0.3], 0.2) == 0.2


def test_placement_rejects_unknown_mode():
    with pytest.raises(ValueError):
        place_threshold([0.1], 0.1, "max")


def test_open_unit():
    assert 0 < open_unit(0.0) < 1e-300
    assert open_unit(1.0) < 1.0 and 1.0 - open_unit(1.0) < 1e-15
    assert open_unit(0.42) == 0.42


# -- stride classification and session scoring -----------------------------------------


def test_classify_strides_uses_ge_rule():
    params = init_params(0)
    strides = [make_stride(60, seed=i) for i in range(5)]
    _, probs = classify_strides(strides, params)
    params.stride_threshold = float(probs[2])
    lame, _ = classify_strides(strides, params)
    assert lame.tolist() == (probs >= probs[2]).tolist()
    assert lame[2]


def test_classify_warns_on_gait_mismatch(caplog):
    params = init_params(0)
    with caplog.at_level("WARNING"):
        classify_strides([make_stride(50, gait=Gait.WALK)], params)
    assert "walk" in caplog.text


@pytest.mark.parametrize(
    "n_lame, n, tau, score, decision",
    [(30, 40, 0.5, 0.75, Label.LAME), (0, 40, 0.5, 0.0, Label.SOUND), (20, 40, 0.5, 0.5, Label.LAME), (19, 40, 0.5, 0.475, Label.SOUND)],
)
def test_score_session_examples(n_lame, n, tau, score, decision):
    s = score_session([True] * n_lame + [False] * (n - n_lame), tau, "x", Label.LAME)
    assert (s.n_strides, s.n_lame_pred, s.anomaly_score, s.decision) == (n, n_lame, score, decision)


def test_score_session_empty():
    with pytest.raises(ValueError):
        score_session([], 0.5)


@given(st.lists(st.booleans(), min_size=1, max_size=80), st.randoms(use_true_random=False))
def test_score_session_permutation_invariant(preds, rnd):
    shuffled = list(preds)
    rnd.shuffle(shuffled)
    a, b = score_session(preds, 0.4), score_session(shuffled, 0.4)
    assert (a.anomaly_score, a.decision) == (b.anomaly_score, b.decision)


# -- report ----------------------------------------------------------------------------


def test_temporal_histogram_uniform():
    length = 10_000
    strides = [make_stride(80, sid="A", start=int(i * length / 100)) for i in range(100)]
    hist = temporal_histogram(strides, {"A": length, "B": 500})
    assert np.all(np.abs(hist["A"] - 10) <= 3)
    assert hist["ALL"].sum() == 100 and hist["B"].sum() == 0


def test_temporal_histogram_last_bin_inclusive():
    hist = temporal_histogram([make_stride(80, sid="A", start=999)], {"A": 1000})
    assert hist["A"][-1] == 1


def _report(all_correct: bool = True) -> EvalReport:
    params = init_params(0)
    preds, scores = [], []
    for sid, label in (("A", Label.SOUND), ("B", Label.LAME)):
        flags = []
        for i in range(10):
            stride = make_stride(80, label=label, sid=sid, start=80 * i)
            lame = (label is Label.LAME) if all_correct or i else (label is not Label.LAME)
            preds.append(StridePrediction(stride, 0.9 if lame else 0.1, lame))
            flags.append(lame)
        scores.append(score_session(flags, 0.5, sid, label))
    return build_report(preds, scores, {Gait.WALK: 0.5}, {"A": 1000, "B": 1000}, params, seed=3)


def test_report_all_correct_has_zero_off_diagonal():
    r = _report()
    assert r.stride_confusion == Confusion(tp=10, fp=0, tn=10, fn=0)
    assert r.session_confusion.matrix().tolist() == [[1, 0], [0, 1]]
    assert r.per_gait_accuracy == {Gait.WALK: 0.5, Gait.TROT: 1.0}


def test_report_totals_and_files(tmp_path):
    r = _report(all_correct=False)
    assert r.stride_confusion.total == 20 and r.session_confusion.total == 2
    assert r.stride_confusion.fp == 1 and r.stride_confusion.fn == 1
    r.write(tmp_path)
    header = (tmp_path / "session_scores.csv").read_text().splitlines()[0]
    assert header == "session_id,n_strides,n_lame_pred,anomaly_score,decision,true_label"
    for name in ("stride_confusion.csv", "pr_curve.csv", "temporal_histogram.csv", "summary.txt"):
        assert (tmp_path / name).exists()
    summary = (tmp_path / "summary.txt").read_text()
    assert "75.5%" in summary and "53%" in summary and "74%" in summary and "90%" in summary


def test_confusion_metrics():
    c = Confusion.from_predictions([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)
    assert c.accuracy == 0.6 and c.precision == pytest.approx(2 / 3) and c.recall == pytest.approx(2 / 3)
    assert Confusion().f1 == 0.0
