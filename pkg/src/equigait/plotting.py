"""Matplotlib figures written next to the CSV reports.

Figures are SVG with a fixed hash salt and no date metadata, so repeated runs
produce identical files.
"""

from __future__ import annotations

import logging
import pathlib
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import Gait  # noqa: E402
from .evaluate import Confusion, EvalReport, PrCurvePoint  # noqa: E402
from .segmentation import StrideLengthStats  # noqa: E402

log = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "equigait"
_SAVE_KW = dict(format="svg", metadata={"Date": None, "Creator": None})


def _save(fig: plt.Figure, path: pathlib.Path) -> pathlib.Path:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    log.debug("wrote %s", path)
    return path


def stride_length_histogram(stats: StrideLengthStats, figure_path: pathlib.Path, gait: Gait = Gait.TROT) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts = stats.histogram.get(gait, {})
    if counts:
        lengths = sorted(counts)
        ax.bar(lengths, [counts[k] for k in lengths], width=1.0, color="C0")
    ax.set_xlabel("stride length (samples at 100 Hz)")
    ax.set_ylabel("strides")
    ax.set_title(f"{gait.value} stride length distribution")
    return _save(fig, figure_path)


def confusion_matrix(conf: Confusion, figure_path: pathlib.Path, title: str) -> pathlib.Path:
    m = conf.matrix()
    fig, ax = plt.subplots(figsize=(3.8, 3.4))
    ax.imshow(m, cmap="Blues")
    for (i, j), v in np.ndenumerate(m):
        ax.text(j, i, str(v), ha="center", va="center", color="white" if v > m.max() / 2 else "black")
    ax.set_xticks([0, 1], ["sound", "lame"])
    ax.set_yticks([0, 1], ["sound", "lame"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(title)
    return _save(fig, figure_path)


def gait_accuracy_bars(per_gait: dict[Gait, float], figure_path: pathlib.Path) -> pathlib.Path:
    order = [g for g in (Gait.WALK, Gait.TROT, Gait.CANTER) if g in per_gait]
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar([g.value for g in order], [100 * per_gait[g] for g in order], color="C0")
    ax.set_ylim(0, 100)
    ax.set_xlabel("gait")
    ax.set_ylabel("test stride accuracy (%)")
    return _save(fig, figure_path)


def pr_curve_plot(curve: Sequence[PrCurvePoint], threshold: float, figure_path: pathlib.Path) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=(4, 3.5))
    if curve:
        ax.plot([p.recall for p in curve], [p.precision for p in curve], color="C0")
        best = min(curve, key=lambda p: abs(p.threshold - threshold))
        ax.plot([best.recall], [best.precision], "o", color="C3", label=f"t = {threshold:.3f}")
        ax.legend(loc="lower left")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    return _save(fig, figure_path)


def temporal_distribution(report: EvalReport, figure_path: pathlib.Path) -> pathlib.Path:
    counts = report.temporal["ALL"]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(len(counts)) * 10 + 5, counts, width=9, color="C3")
    ax.set_xlabel("position in session (% of duration)")
    ax.set_ylabel("lame-predicted strides")
    ax.set_xlim(0, 100)
    return _save(fig, figure_path)


def training_curves(train_log, figure_path: pathlib.Path) -> pathlib.Path:
    epochs = [r.epoch for r in train_log.records]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(epochs, [r.train_loss for r in train_log.records], label="train")
    ax.plot(epochs, [r.val_loss for r in train_log.records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("BCE loss")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, figure_path)


def render_report(report: EvalReport, out_dir, stats: StrideLengthStats | None = None, train_log=None) -> list[pathlib.Path]:
    out = pathlib.Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        confusion_matrix(report.stride_confusion, out / "stride_confusion.svg", f"{report.gait.value} strides"),
        confusion_matrix(report.session_confusion, out / "session_confusion.svg", "sessions"),
        gait_accuracy_bars(report.per_gait_accuracy, out / "gait_accuracy.svg"),
        pr_curve_plot(report.pr_curve, report.stride_threshold, out / "pr_curve.svg"),
        temporal_distribution(report, out / "temporal_distribution.svg"),
    ]
    if stats is not None:
        paths.append(stride_length_histogram(stats, out / "stride_lengths.svg", report.gait))
    if train_log is not None and train_log.records:
        paths.append(training_curves(train_log, out / "training_curves.svg"))
    return paths
