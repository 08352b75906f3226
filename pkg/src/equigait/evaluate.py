"""Threshold calibration, stride/session scoring and the evaluation report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Gait, Label, Stride
from .nn.model import ModelParams, predict_proba

log = logging.getLogger(__name__)

# Published figures, shown next to synthetic results for orientation only.
REFERENCE_RESULTS = (
    ("trot stride accuracy", "75.5%"),
    ("walk stride accuracy", "53%"),
    ("canter stride accuracy", "74%"),
    ("trot lame strides recalled", "6,470 / 8,237"),
    ("session accuracy", "90% (29 / 32 sessions, 13 lame sessions detected)"),
)


@dataclass(frozen=True)
class PrCurvePoint:
    threshold: float
    precision: float
    recall: float
    f1: float


def _f1(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> list[PrCurvePoint]:
    """Precision/recall/F1 at every unique score, using the rule ``score >= t`` => lame."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be non-empty and aligned")
    if labels.all() or not labels.any():
        raise ValueError("threshold selection needs both labels")
    candidates = np.unique(scores)
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    tp = pos.size - np.searchsorted(pos, candidates, side="left")
    fp = neg.size - np.searchsorted(neg, candidates, side="left")
    fn = pos.size - tp
    f1 = _f1(tp, fp, fn)
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = tp / pos.size
    return [PrCurvePoint(float(t), float(p), float(r), float(f)) for t, p, r, f in zip(candidates, precision, recall, f1)]


def select_threshold(scores: Sequence[float], labels: Sequence[int]) -> tuple[float, list[PrCurvePoint]]:
    """F1-maximizing threshold over the unique scores; ties go to the largest threshold."""
    curve = pr_curve(scores, labels)
    f1 = np.array([p.f1 for p in curve])
    best = int(np.flatnonzero(f1 == f1.max())[-1])
    return curve[best].threshold, curve


def select_stride_threshold(val_probs: Sequence[float], val_labels: Sequence[int]) -> tuple[float, list[PrCurvePoint]]:
    return select_threshold(val_probs, val_labels)


def calibrate_session_threshold(val_session_scores: Sequence[float], val_session_labels: Sequence[int]) -> float:
    return select_threshold(val_session_scores, val_session_labels)[0]


PLACEMENTS = ("midpoint", "candidate")


def place_threshold(scores: Sequence[float], t: float, placement: str = "midpoint") -> float:
    """Move ``t`` into the middle of the empty score gap directly below it.

    Under the >= rule every threshold in (largest score below t, t] makes the
    same decisions on ``scores``, so the midpoint keeps the fitted F1 while
    leaving a margin for unseen scores on both sides. ``"candidate"`` returns
    ``t`` unchanged.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown threshold placement {placement!r}; expected one of {PLACEMENTS}")
    if placement == "candidate":
        return float(t)
    below = np.asarray(scores, dtype=np.float64)
    below = below[below < t]
    if below.size == 0:
        return float(t)
    lo = float(below.max())
    mid = lo + (t - lo) / 2.0
    # adjacent floats have no representable midpoint
    return mid if lo < mid < t else float(t)


def open_unit(t: float) -> float:
    """Nudge a threshold into (0, 1) without changing any decision on [0, 1] scores."""
    if t >= 1.0:
        return float(np.nextafter(1.0, 0.0))
    if t <= 0.0:
        return float(np.nextafter(0.0, 1.0))
    return float(t)


# -- classification and scoring --------------------------------------------------------


def classify_strides(strides: Sequence[Stride], params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(is_lame, probabilities)`` for inference-mode predictions."""
    mismatched = {s.gait for s in strides} - {params.gait}
    if mismatched:
        log.warning("classifying %s strides with a %s model", sorted(g.value for g in mismatched), params.gait.value)
    probs = predict_proba(params, strides)
    return probs >= params.stride_threshold, probs


@dataclass(frozen=True)
class SessionScore:
    session_id: str
    n_strides: int
    n_lame_pred: int
    anomaly_score: float
    decision: Label
    true_label: Label = Label.UNKNOWN

    def __post_init__(self) -> None:
        if not 0.0 <= self.anomaly_score <= 1.0:
            raise ValueError("anomaly score outside [0, 1]")


def score_session(
    stride_predictions: Sequence[bool],
    session_threshold: float,
    session_id: str = "",
    true_label: Label = Label.UNKNOWN,
) -> SessionScore:
    preds = np.asarray(stride_predictions, dtype=bool)
    if preds.size == 0:
        raise ValueError(f"session {session_id!r} has no strides to score")
    n_lame = int(preds.sum())
    score = n_lame / preds.size
    decision = Label.LAME if score >= session_threshold else Label.SOUND
    return SessionScore(session_id, int(preds.size), n_lame, score, decision, true_label)


# -- report ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, predicted: Sequence[bool], actual: Sequence[bool]) -> "Confusion":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls(int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & ~a)), int(np.sum(~p & a)))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0

    def matrix(self) -> np.ndarray:
        """Rows: actual sound, actual lame. Columns: predicted sound, predicted lame."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


@dataclass
class StridePrediction:
    stride: Stride
    probability: float
    lame: bool


def temporal_histogram(
    lame_strides: Sequence[Stride], session_lengths: Mapping[str, int], bins: int = 10
) -> dict[str, np.ndarray]:
    """Counts of lame-predicted stride starts per fraction-of-session bin, per session and ``ALL``."""
    out: dict[str, np.ndarray] = {"ALL": np.zeros(bins, dtype=int)}
    for sid in sorted(session_lengths):
        out[sid] = np.zeros(bins, dtype=int)
    for s in lame_strides:
        frac = s.start_index / session_lengths[s.session_id]
        b = min(int(frac * bins), bins - 1)
        out[s.session_id][b] += 1
        out["ALL"][b] += 1
    return out


@dataclass
class EvalReport:
    gait: Gait
    seed: int | None
    stride_threshold: float
    session_threshold: float
    stride_confusion: Confusion
    session_confusion: Confusion
    session_scores: list[SessionScore]
    per_gait_accuracy: dict[Gait, float]
    temporal: dict[str, np.ndarray]
    pr_curve: list[PrCurvePoint] = field(default_factory=list)
    session_pr_curve: list[PrCurvePoint] = field(default_factory=list)

    def summary(self) -> str:
        sc, ss = self.stride_confusion, self.session_confusion
        lines = [
            f"gait: {self.gait.value}",
            f"seed: {self.seed}",
            f"stride threshold: {self.stride_threshold!r}",
            f"session threshold: {self.session_threshold!r}",
            "",
            f"stride level ({sc.total} strides, lame = positive)",
            f"  TP {sc.tp}  FP {sc.fp}  TN {sc.tn}  FN {sc.fn}",
            f"  accuracy {sc.accuracy:.4f}  precision {sc.precision:.4f}  recall {sc.recall:.4f}  F1 {sc.f1:.4f}",
            f"session level ({ss.total} sessions)",
            f"  TP {ss.tp}  FP {ss.fp}  TN {ss.tn}  FN {ss.fn}",
            f"  accuracy {ss.accuracy:.4f}  precision {ss.precision:.4f}  recall {ss.recall:.4f}  F1 {ss.f1:.4f}",
            f"  false positives {ss.fp}, false negatives {ss.fn}",
            "",
            "per-gait stride accuracy",
        ]
        for gait in sorted(self.per_gait_accuracy, key=lambda g: g.value):
            lines.append(f"  {gait.value}: {self.per_gait_accuracy[gait]:.4f}")
        lines += ["", "lame-predicted stride positions (deciles of session duration, all sessions)"]
        lines.append("  " + " ".join(str(int(c)) for c in self.temporal["ALL"]))
        lines += ["", "published reference (proprietary data, not reproduced here)"]
        lines += [f"  {name}: {value}" for name, value in REFERENCE_RESULTS]
        return "\n".join(lines) + "\n"

    def stride_confusion_csv(self) -> str:
        return _confusion_csv(self.stride_confusion)

    def session_confusion_csv(self) -> str:
        return _confusion_csv(self.session_confusion)

    def session_scores_csv(self) -> str:
        lines = ["session_id,n_strides,n_lame_pred,anomaly_score,decision,true_label"]
        for s in self.session_scores:
            lines.append(
                f"{s.session_id},{s.n_strides},{s.n_lame_pred},{s.anomaly_score!r},{s.decision.value},{s.true_label.value}"
            )
        return "\n".join(lines) + "\n"

    def pr_curve_csv(self) -> str:
        return _curve_csv(self.pr_curve)

    def temporal_histogram_csv(self) -> str:
        n = len(self.temporal["ALL"])
        lines = ["session_id," + ",".join(f"d{i}" for i in range(n))]
        for sid, counts in self.temporal.items():
            lines.append(sid + "," + ",".join(str(int(c)) for c in counts))
        return "\n".join(lines) + "\n"

    def per_gait_csv(self) -> str:
        lines = ["gait,accuracy"]
        for gait in sorted(self.per_gait_accuracy, key=lambda g: g.value):
            lines.append(f"{gait.value},{self.per_gait_accuracy[gait]!r}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "stride_confusion.csv": self.stride_confusion_csv(),
            "session_confusion.csv": self.session_confusion_csv(),
            "session_scores.csv": self.session_scores_csv(),
            "pr_curve.csv": self.pr_curve_csv(),
            "session_pr_curve.csv": _curve_csv(self.session_pr_curve),
            "temporal_histogram.csv": self.temporal_histogram_csv(),
            "per_gait_accuracy.csv": self.per_gait_csv(),
            "summary.txt": self.summary(),
        }
        written = []
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
            written.append(out / name)
        return written


def _confusion_csv(c: Confusion) -> str:
    return (
        "actual,predicted_sound,predicted_lame\n"
        f"sound,{c.tn},{c.fp}\n"
        f"lame,{c.fn},{c.tp}\n"
    )


def _curve_csv(curve: Sequence[PrCurvePoint]) -> str:
    lines = ["threshold,precision,recall,f1"]
    lines += [f"{p.threshold!r},{p.precision!r},{p.recall!r},{p.f1!r}" for p in curve]
    return "\n".join(lines) + "\n"


def build_report(
    predictions: Sequence[StridePrediction],
    session_scores: Sequence[SessionScore],
    gait_results: Mapping[Gait, float],
    session_lengths: Mapping[str, int],
    params: ModelParams,
    seed: int | None = None,
    pr: Sequence[PrCurvePoint] = (),
    session_pr: Sequence[PrCurvePoint] = (),
) -> EvalReport:
    labeled = [p for p in predictions if p.stride.label is not None]
    stride_conf = Confusion.from_predictions(
        [p.lame for p in labeled], [p.stride.label is Label.LAME for p in labeled]
    )
    scored = [s for s in session_scores if s.true_label is not Label.UNKNOWN]
    session_conf = Confusion.from_predictions(
        [s.decision is Label.LAME for s in scored], [s.true_label is Label.LAME for s in scored]
    )
    per_gait = dict(gait_results)
    per_gait.setdefault(params.gait, stride_conf.accuracy)
    return EvalReport(
        gait=params.gait,
        seed=seed,
        stride_threshold=params.stride_threshold,
        session_threshold=params.session_threshold,
        stride_confusion=stride_conf,
        session_confusion=session_conf,
        session_scores=list(session_scores),
        per_gait_accuracy=per_gait,
        temporal=temporal_histogram([p.stride for p in predictions if p.lame], session_lengths),
        pr_curve=list(pr),
        session_pr_curve=list(session_pr),
    )
