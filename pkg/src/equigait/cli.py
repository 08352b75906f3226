"""Command-line entry point: ``equigait <subcommand> [options]``.

Options may also come from a ``key=value`` file passed with ``--config``;
keys are option names without the leading dashes, and flags on the command
line override them.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .data import (
    ChannelManifest,
    Gait,
    Label,
    Split,
    SplitAssignment,
    load_session,
    load_session_dir,
    split_sessions,
)
from .evaluate import PLACEMENTS
from .nn import checkpoint
from .nn.model import ArchConfig
from .segmentation import (
    SegmentationConfig,
    filter_sessions_by_trot_count,
    segment_session,
    segment_sessions,
    stride_index_csv,
    stride_length_stats,
)
from .synth import DEFAULT_PERIODS, SynthConfig
from .train import TrainConfig

log = logging.getLogger("equigait")

EXIT_SOUND, EXIT_ERROR, EXIT_LAME, EXIT_INSUFFICIENT = 0, 1, 2, 3
MANIFEST_SCALAR = "manifest.vertical_accel_index"


class CliError(Exception):
    pass


# -- config handling -------------------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key=value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _gait(text: str) -> Gait:
    try:
        return Gait(text.lower())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown gait {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


# -- option groups ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--gait", type=_gait, default=Gait.TROT, help="gait to model (default trot)")
    p.add_argument("--config", help="key=value file with option defaults")
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def _seg_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("segmentation")
    g.add_argument("--max-stride-len", type=int, default=100)
    g.add_argument("--min-peak-distance", type=int, default=30)
    g.add_argument("--prominence-factor", type=float, default=0.5)
    g.add_argument("--min-trot-strides", type=int, default=40)


def _synth_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic corpus")
    g.add_argument("--n-sound", type=int, default=30)
    g.add_argument("--n-lame", type=int, default=30)
    g.add_argument("--walk-s", type=float, default=10.0, help="seconds of walk per session")
    g.add_argument("--trot-s", type=float, default=60.0, help="seconds of trot per session")
    g.add_argument("--canter-s", type=float, default=10.0, help="seconds of canter per session")
    g.add_argument("--duration-s", type=float, default=None, help="trot-only session of this length")
    g.add_argument("--walk-period", type=int, default=DEFAULT_PERIODS[Gait.WALK])
    g.add_argument("--trot-period", type=int, default=DEFAULT_PERIODS[Gait.TROT])
    g.add_argument("--canter-period", type=int, default=DEFAULT_PERIODS[Gait.CANTER])
    g.add_argument("--period-jitter", type=float, default=0.05)
    g.add_argument("--asymmetry-range", type=_floats, default=(0.2, 0.4), help="lo,hi for lame sessions")
    g.add_argument("--noise-std", type=float, default=0.05)
    g.add_argument("--session-variation", type=float, default=0.1)


def _train_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=100)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--conv1-filters", type=int, default=32)
    g.add_argument("--conv2-filters", type=int, default=64)
    g.add_argument("--kernel-size", type=int, default=5)
    g.add_argument("--dropout", type=float, default=0.3)
    g.add_argument("--dense-units", type=int, default=64)
    g.add_argument("--no-class-weights", action="store_true")


def _data_opts(p: argparse.ArgumentParser, split: bool = True) -> None:
    p.add_argument("--sessions", required=True, help="directory of *.session.csv files")
    p.add_argument("--manifest", help="channel manifest (default: <sessions>/manifest.txt)")
    if split:
        p.add_argument("--split", required=True, help="split file from 'equigait split'")


def seg_config(a: argparse.Namespace) -> SegmentationConfig:
    return SegmentationConfig(a.max_stride_len, a.min_peak_distance, a.prominence_factor, a.min_trot_strides)


def synth_config(a: argparse.Namespace) -> SynthConfig:
    return SynthConfig(
        seed=a.seed,
        gait_plan=((Gait.WALK, a.walk_s), (Gait.TROT, a.trot_s), (Gait.CANTER, a.canter_s)),
        duration_s=a.duration_s,
        stride_period_samples={Gait.WALK: a.walk_period, Gait.TROT: a.trot_period, Gait.CANTER: a.canter_period, Gait.OTHER: a.trot_period},
        period_jitter=a.period_jitter,
        noise_std=a.noise_std,
        session_variation=a.session_variation,
    )


def train_config(a: argparse.Namespace) -> TrainConfig:
    arch = ArchConfig(
        conv1_filters=a.conv1_filters,
        conv2_filters=a.conv2_filters,
        kernel_size=a.kernel_size,
        dropout=a.dropout,
        dense_units=a.dense_units,
    )
    return TrainConfig(
        gait=a.gait, epochs=a.epochs, batch_size=a.batch_size, initial_lr=a.lr, seed=a.seed, arch=arch,
        class_weighting=not a.no_class_weights,
    )


def _manifest(a: argparse.Namespace) -> ChannelManifest:
    if a.manifest:
        return ChannelManifest.load(a.manifest)
    default = Path(a.sessions) / "manifest.txt"
    return ChannelManifest.load(default) if default.exists() else ChannelManifest.default()


def _out(a: argparse.Namespace, default: str) -> Path:
    return Path(a.out or default)


def _segmented(a: argparse.Namespace, filtered: bool = True):
    manifest = _manifest(a)
    sessions = load_session_dir(a.sessions, manifest)
    cfg = seg_config(a)
    segmented = segment_sessions(sessions, cfg, manifest)
    if filtered:
        segmented, excluded = filter_sessions_by_trot_count(segmented, cfg)
        for e in excluded:
            log.info("excluded %s: %d trot strides < %d", e.session.session_id, e.count(Gait.TROT), cfg.min_trot_strides_per_session)
    return segmented, manifest


def _with_split(a: argparse.Namespace):
    segmented, manifest = _segmented(a)
    split = SplitAssignment.load(a.split)
    segmented = [s for s in segmented if s.session.session_id in split.assignment]
    return segmented, split, manifest


# -- subcommands -----------------------------------------------------------------------


def cmd_synth(a: argparse.Namespace) -> int:
    from .synth import generate_corpus

    lo, hi = a.asymmetry_range
    out = _out(a, "synth")
    corpus = generate_corpus(a.n_sound, a.n_lame, synth_config(a), seed=a.seed, asymmetry_range=(lo, hi), out_dir=out)
    print(f"wrote {len(corpus.sessions)} sessions ({a.n_sound} sound, {a.n_lame} lame) to {out} [seed {a.seed}]")
    return 0


def cmd_ingest(a: argparse.Namespace) -> int:
    manifest = ChannelManifest.load(a.manifest) if a.manifest else None
    paths: list[Path] = []
    for item in a.inputs:
        p = Path(item)
        paths.extend(sorted(p.glob("*.session.csv")) if p.is_dir() else [p])
    lines = ["session_id,horse_id,label,n_samples,walk,trot,canter,other"]
    for path in paths:
        s = load_session(path, manifest)
        counts = {g: int((s.gait_tags == g.value).sum()) for g in Gait}
        lines.append(
            f"{s.session_id},{s.horse_id},{s.label.value},{s.n_samples},"
            + ",".join(str(counts[g]) for g in (Gait.WALK, Gait.TROT, Gait.CANTER, Gait.OTHER))
        )
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
        print(f"validated {len(paths)} session files; summary in {a.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_segment(a: argparse.Namespace) -> int:
    manifest = _manifest(a)
    cfg = seg_config(a)
    segmented = segment_sessions(load_session_dir(a.sessions, manifest), cfg, manifest)
    kept, excluded = filter_sessions_by_trot_count(segmented, cfg)
    out = _out(a, "segments")
    out.mkdir(parents=True, exist_ok=True)
    (out / "strides.csv").write_text(stride_index_csv(segmented), encoding="utf-8")
    excl = ["session_id,trot_strides"] + [f"{e.session.session_id},{e.count(Gait.TROT)}" for e in excluded]
    (out / "excluded_sessions.csv").write_text("\n".join(excl) + "\n", encoding="utf-8")
    all_strides = [s for item in segmented for s in item.strides]
    mixed = sum(item.drops.mixed_gait for item in segmented)
    over = sum(item.drops.over_length for item in segmented)
    print(f"{len(segmented)} sessions, {len(all_strides)} strides; dropped {mixed} mixed-gait, {over} over-length")
    print(f"kept {len(kept)} sessions, excluded {len(excluded)} with < {cfg.min_trot_strides_per_session} trot strides")
    if all_strides:
        stats = stride_length_stats(all_strides)
        (out / "stride_lengths.csv").write_text(stats.to_csv(), encoding="utf-8")
        print(f"stride length mean {stats.mean:.2f}, median {stats.median:.1f}, p95 {stats.p95:.1f} samples")
        if not a.no_plots:
            from . import plotting

            (out / "figures").mkdir(exist_ok=True)
            plotting.stride_length_histogram(stats, out / "figures" / "stride_lengths.svg", a.gait)
    return 0


def cmd_split(a: argparse.Namespace) -> int:
    segmented, _ = _segmented(a, filtered=not a.no_filter)
    split = split_sessions([s.session for s in segmented], a.fractions, a.seed)
    out = _out(a, "split.csv")
    split.save(out)
    n = {s: len(split.sessions_in(s)) for s in Split}
    strides = {s: 0 for s in Split}
    for item in segmented:
        strides[split.assignment[item.session.session_id]] += item.count(a.gait)
    total = sum(strides.values()) or 1
    print(f"sessions train/val/test = {n[Split.TRAIN]}/{n[Split.VALIDATION]}/{n[Split.TEST]} [seed {a.seed}]")
    print(
        f"{a.gait.value} stride fractions = "
        + "/".join(f"{strides[s] / total:.3f}" for s in (Split.TRAIN, Split.VALIDATION, Split.TEST))
    )
    return 0


def cmd_train(a: argparse.Namespace) -> int:
    from .train import build_datasets, train_model

    segmented, split, manifest = _with_split(a)
    cfg = train_config(a)
    datasets = build_datasets(segmented, split, cfg.gait)
    print(
        f"train {len(datasets.train)} / val {len(datasets.val)} / test {len(datasets.test)} {cfg.gait.value} strides; "
        f"class weights sound {datasets.class_weights.w_sound:.5f} lame {datasets.class_weights.w_lame:.5f}"
    )
    params, train_log = train_model(
        datasets, cfg, on_epoch=lambda r: log.info("epoch %d val_loss %.4f lr %.2e", r.epoch, r.val_loss, r.learning_rate)
    )
    out = _out(a, "model")
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(params, out / "model.ckpt", {MANIFEST_SCALAR: manifest.vertical_accel_index})
    (out / "train_log.csv").write_text(train_log.to_csv(), encoding="utf-8")
    best = train_log.records[train_log.best_epoch - 1]
    print(f"best epoch {best.epoch}: val loss {best.val_loss:.4f}, val accuracy {best.val_accuracy:.4f} [seed {a.seed}]")
    print(f"checkpoint: {out / 'model.ckpt'}")
    return 0


def cmd_calibrate(a: argparse.Namespace) -> int:
    from .evaluate import _curve_csv
    from .pipeline import calibrate, in_split

    segmented, split, _ = _with_split(a)
    params, extra = checkpoint.load(a.checkpoint)
    cal = calibrate(params, in_split(segmented, split, Split.VALIDATION), a.threshold_placement)
    out = Path(a.out or a.checkpoint)
    checkpoint.save(cal.params, out, extra)
    (out.parent / "pr_curve.csv").write_text(_curve_csv(cal.stride_curve), encoding="utf-8")
    (out.parent / "session_pr_curve.csv").write_text(_curve_csv(cal.session_curve), encoding="utf-8")
    print(f"stride threshold {cal.params.stride_threshold:.6f}, session threshold {cal.params.session_threshold:.6f}")
    print(f"checkpoint: {out}")
    return 0


def cmd_evaluate(a: argparse.Namespace) -> int:
    from .pipeline import evaluate, in_split

    segmented, split, _ = _with_split(a)
    params, _ = checkpoint.load(a.checkpoint)
    report = evaluate(params, in_split(segmented, split, Split.TEST), seed=split.seed)
    out = _out(a, "report")
    report.write(out)
    if not a.no_plots:
        from . import plotting

        plotting.render_report(report, out)
    sys.stdout.write(report.summary())
    return 0


def cmd_predict(a: argparse.Namespace) -> int:
    from .evaluate import classify_strides, score_session

    try:
        params, extra = checkpoint.load(a.checkpoint)
    except (checkpoint.CheckpointError, OSError) as exc:
        raise CliError(str(exc)) from exc
    if a.manifest:
        manifest = ChannelManifest.load(a.manifest)
    elif (Path(a.session).parent / "manifest.txt").exists():
        manifest = ChannelManifest.load(Path(a.session).parent / "manifest.txt")
    else:
        base = ChannelManifest.default()
        idx = int(extra.get(MANIFEST_SCALAR, base.vertical_accel_index))
        manifest = ChannelManifest(base.names, idx)
    session = load_session(a.session, manifest)
    cfg = seg_config(a)
    strides = [s for s in segment_session(session, cfg, manifest) if s.gait is params.gait]
    print(f"session {session.session_id}: {len(strides)} {params.gait.value} strides")
    if len(strides) < cfg.min_trot_strides_per_session:
        print(
            f"insufficient strides: {len(strides)} < {cfg.min_trot_strides_per_session} "
            f"{params.gait.value} strides required (minimum of {cfg.min_trot_strides_per_session})"
        )
        return EXIT_INSUFFICIENT
    lame, _ = classify_strides(strides, params)
    score = score_session(lame, params.session_threshold, session.session_id)
    print(f"lame strides: {score.n_lame_pred} / {score.n_strides}")
    print(f"anomaly score: {score.anomaly_score:.4f} (session threshold {params.session_threshold:.4f})")
    print(f"decision: {score.decision.value}")
    return EXIT_LAME if score.decision is Label.LAME else EXIT_SOUND


def cmd_pipeline(a: argparse.Namespace) -> int:
    from .pipeline import run_pipeline

    out = _out(a, "run")
    result = run_pipeline(
        out,
        seed=a.seed,
        n_sound=a.n_sound,
        n_lame=a.n_lame,
        synth_cfg=synth_config(a),
        asymmetry_range=a.asymmetry_range,
        seg_cfg=seg_config(a),
        train_cfg=train_config(a),
        compare_gaits=a.compare_gaits,
        plots=not a.no_plots,
        placement=a.threshold_placement,
    )
    sys.stdout.write(result.report.summary())
    print(f"outputs in {out}")
    return 0


# -- parser ----------------------------------------------------------------------------


def _placement_opt(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--threshold-placement",
        choices=PLACEMENTS,
        default="midpoint",
        help="midpoint of the winning score gap (default) or the raw F1-maximizing score",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equigait", description="Stride-level lameness detection from one IMU.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    _common(p)
    _synth_opts(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate session files and summarize them")
    _common(p)
    p.add_argument("inputs", nargs="+", help="session files or directories")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="segment sessions into strides")
    _common(p)
    _data_opts(p, split=False)
    _seg_opts(p)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("split", help="stratified session-level train/validation/test split")
    _common(p)
    _data_opts(p, split=False)
    _seg_opts(p)
    p.add_argument("--fractions", type=_floats, default=(0.6, 0.2, 0.2))
    p.add_argument("--no-filter", action="store_true", help="do not drop sessions with too few trot strides")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the stride classifier")
    _common(p)
    _data_opts(p)
    _seg_opts(p)
    _train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit stride and session thresholds on validation data")
    _common(p)
    _data_opts(p)
    _seg_opts(p)
    p.add_argument("--checkpoint", required=True)
    _placement_opt(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="score the test split and write reports")
    _common(p)
    _data_opts(p)
    _seg_opts(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one session (exit 0 sound, 2 lame, 3 too few strides)")
    _common(p)
    _seg_opts(p)
    p.add_argument("session", help="session file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pipeline", help="synth -> segment -> split -> train -> calibrate -> evaluate")
    _common(p)
    _synth_opts(p)
    _seg_opts(p)
    _train_opts(p)
    p.add_argument("--compare-gaits", type=lambda s: tuple(_gait(t) for t in s.split(",") if t), default=())
    p.add_argument("--no-plots", action="store_true")
    _placement_opt(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        known = {action.dest for action in subparser._actions}
        unknown = set(values) - known
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        flags = {a.dest for a in subparser._actions if isinstance(a, argparse._StoreTrueAction)}
        defaults: dict[str, object] = {}
        for key, value in values.items():
            if key in flags:
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise CliError(f"config key {key} expects true/false, got {value!r}")
                defaults[key] = value.lower() in ("true", "1", "yes")
            else:
                defaults[key] = value
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
