"""Calibration, evaluation and the all-in-one desk experiment."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Gait, Label, Split, SplitAssignment, split_sessions
from .evaluate import (
    EvalReport,
    PrCurvePoint,
    SessionScore,
    StridePrediction,
    build_report,
    calibrate_session_threshold,
    classify_strides,
    open_unit,
    place_threshold,
    pr_curve,
    score_session,
    select_stride_threshold,
)
from .nn import checkpoint
from .nn.model import ModelParams, predict_proba
from .segmentation import SegmentationConfig, SegmentedSession, filter_sessions_by_trot_count, segment_sessions, stride_index_csv, stride_length_stats
from .synth import SynthConfig, generate_corpus
from .train import TrainConfig, TrainLog, build_datasets, train_model

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


def in_split(segmented: Sequence[SegmentedSession], split: SplitAssignment, which: Split) -> list[SegmentedSession]:
    ids = set(split.sessions_in(which))
    return [s for s in segmented if s.session.session_id in ids]


def predict_sessions(
    params: ModelParams, segmented: Sequence[SegmentedSession], gait: Gait | None = None
) -> tuple[list[StridePrediction], list[SessionScore]]:
    """Classify every ``gait`` stride and score each session that has at least one."""
    gait = gait or params.gait
    predictions: list[StridePrediction] = []
    scores: list[SessionScore] = []
    for item in segmented:
        strides = [s for s in item.strides if s.gait is gait]
        if not strides:
            log.warning("session %s has no %s strides; skipped", item.session.session_id, gait.value)
            continue
        lame, probs = classify_strides(strides, params)
        predictions += [StridePrediction(s, float(p), bool(k)) for s, p, k in zip(strides, probs, lame)]
        scores.append(score_session(lame, params.session_threshold, item.session.session_id, item.session.label))
    return predictions, scores


@dataclass
class Calibration:
    params: ModelParams
    stride_curve: list[PrCurvePoint]
    session_curve: list[PrCurvePoint]


def calibrate(params: ModelParams, val_sessions: Sequence[SegmentedSession], placement: str = "midpoint") -> Calibration:
    """Fit the stride threshold on validation strides, then the session threshold on validation sessions.

    Both are F1-maximizing scans; ``placement`` decides where inside the
    winning decision-equivalent interval the stored threshold sits.
    """
    params = params.copy()
    strides = [s for item in val_sessions for s in item.strides if s.gait is params.gait]
    probs = predict_proba(params, strides)
    labels = [s.label.target for s in strides]
    threshold, stride_curve = select_stride_threshold(probs, labels)
    params.stride_threshold = open_unit(place_threshold(probs, threshold, placement))
    _, scores = predict_sessions(params, val_sessions)
    session_scores = [s.anomaly_score for s in scores]
    session_labels = [s.true_label.target for s in scores]
    tau = calibrate_session_threshold(session_scores, session_labels)
    params.session_threshold = open_unit(place_threshold(session_scores, tau, placement))
    return Calibration(params, stride_curve, pr_curve(session_scores, session_labels))


def evaluate(
    params: ModelParams,
    test_sessions: Sequence[SegmentedSession],
    seed: int | None = None,
    gait_results: dict[Gait, float] | None = None,
    stride_curve: Sequence[PrCurvePoint] = (),
    session_curve: Sequence[PrCurvePoint] = (),
) -> EvalReport:
    predictions, scores = predict_sessions(params, test_sessions)
    scored = {s.session_id for s in scores}
    lengths = {item.session.session_id: item.session.n_samples for item in test_sessions if item.session.session_id in scored}
    return build_report(predictions, scores, gait_results or {}, lengths, params, seed, stride_curve, session_curve)


def config_hash(cfg) -> str:
    text = repr(sorted(dataclasses.asdict(cfg).items())) if dataclasses.is_dataclass(cfg) else repr(cfg)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class PipelineResult:
    out_dir: Path
    params: ModelParams
    report: EvalReport
    train_log: TrainLog
    split: SplitAssignment
    excluded: list[str]


def run_pipeline(
    out_dir: str | Path,
    seed: int = 0,
    n_sound: int = 30,
    n_lame: int = 30,
    synth_cfg: SynthConfig = SynthConfig(),
    asymmetry_range: tuple[float, float] = (0.2, 0.4),
    seg_cfg: SegmentationConfig = SegmentationConfig(),
    train_cfg: TrainConfig | None = None,
    compare_gaits: Sequence[Gait] = (),
    plots: bool = True,
    placement: str = "midpoint",
) -> PipelineResult:
    """synth -> segment -> split -> train -> calibrate -> evaluate, all from one seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_cfg = train_cfg or TrainConfig(seed=seed)

    stage = "synth"
    try:
        corpus = generate_corpus(n_sound, n_lame, synth_cfg, seed=seed, asymmetry_range=asymmetry_range, out_dir=out / "sessions")

        stage = "segment"
        segmented = segment_sessions(corpus.sessions, seg_cfg, corpus.manifest)
        kept, excluded = filter_sessions_by_trot_count(segmented, seg_cfg)
        (out / "strides.csv").write_text(stride_index_csv(kept), encoding="utf-8")
        stats = stride_length_stats([s for item in kept for s in item.strides])
        (out / "stride_lengths.csv").write_text(stats.to_csv(), encoding="utf-8")

        stage = "split"
        split = split_sessions([item.session for item in kept], seed=seed)
        split.save(out / "split.csv")

        stage = "train"
        datasets = build_datasets(kept, split, train_cfg.gait)
        params, train_log = train_model(datasets, train_cfg)
        (out / "train_log.csv").write_text(train_log.to_csv(), encoding="utf-8")

        stage = "calibrate"
        cal = calibrate(params, in_split(kept, split, Split.VALIDATION), placement)
        checkpoint.save(cal.params, out / "model.ckpt")

        stage = "evaluate"
        gait_results = {}
        for gait in compare_gaits:
            if gait is train_cfg.gait:
                continue
            gait_results[gait] = _gait_accuracy(kept, split, gait, dataclasses.replace(train_cfg, gait=gait), placement)
        report = evaluate(
            cal.params, in_split(kept, split, Split.TEST), seed, gait_results, cal.stride_curve, cal.session_curve
        )
        report.write(out)
        if plots:
            from . import plotting

            plotting.render_report(report, out, stats=stats, train_log=train_log)
    except Exception as exc:
        raise StageError(stage, exc) from exc

    manifest_lines = [
        f"seed={seed}",
        f"n_sound={n_sound}",
        f"n_lame={n_lame}",
        f"asymmetry_range={asymmetry_range[0]!r},{asymmetry_range[1]!r}",
        f"threshold_placement={placement}",
        f"synth_config_sha256={config_hash(synth_cfg)}",
        f"segmentation_config_sha256={config_hash(seg_cfg)}",
        f"train_config_sha256={config_hash(train_cfg)}",
        f"sessions_kept={len(kept)}",
        f"sessions_excluded={len(excluded)}",
        f"best_epoch={train_log.best_epoch}",
    ]
    (out / "run_manifest.txt").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    return PipelineResult(out, cal.params, report, train_log, split, [e.session.session_id for e in excluded])


def _gait_accuracy(segmented, split, gait: Gait, cfg: TrainConfig, placement: str = "midpoint") -> float:
    """Train and calibrate a separate model on ``gait`` strides; return its test stride accuracy."""
    datasets = build_datasets(segmented, split, gait)
    params, _ = train_model(datasets, cfg)
    cal = calibrate(params, in_split(segmented, split, Split.VALIDATION), placement)
    lame, _ = classify_strides(datasets.test, cal.params)
    return float(np.mean(lame == np.array([s.label is Label.LAME for s in datasets.test])))
