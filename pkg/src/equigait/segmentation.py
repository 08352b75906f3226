"""Stride segmentation by prominence-gated peak picking on the vertical acceleration."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .data import ChannelManifest, Gait, SensorSession, Stride


@dataclass(frozen=True)
class SegmentationConfig:
    max_stride_len: int = 100
    min_peak_distance: int = 30
    prominence_factor: float = 0.5
    min_trot_strides_per_session: int = 40

    def __post_init__(self) -> None:
        if not self.max_stride_len >= self.min_peak_distance >= 1:
            raise ValueError("need max_stride_len >= min_peak_distance >= 1")
        if not self.prominence_factor > 0:
            raise ValueError("prominence_factor must be positive")
        if self.min_trot_strides_per_session < 0:
            raise ValueError("min_trot_strides_per_session must be non-negative")


@dataclass
class DropCounts:
    """Intervals rejected by :func:`extract_strides`."""

    mixed_gait: int = 0
    over_length: int = 0

    def __iadd__(self, other: "DropCounts") -> "DropCounts":
        self.mixed_gait += other.mixed_gait
        self.over_length += other.over_length
        return self


def detect_stride_boundaries(
    session: SensorSession,
    cfg: SegmentationConfig = SegmentationConfig(),
    manifest: ChannelManifest | None = None,
) -> list[tuple[int, int]]:
    """Return ``(start, end)`` pairs between consecutive vertical-acceleration peaks.

    ``end`` is exclusive and equals the next stride's start.
    """
    manifest = manifest or ChannelManifest.default()
    signal = session.channels[manifest.vertical_accel_index]
    if signal.size < cfg.min_peak_distance:
        return []
    sigma = float(np.std(signal))
    if sigma == 0.0:
        return []
    peaks, _ = find_peaks(signal, prominence=cfg.prominence_factor * sigma, distance=cfg.min_peak_distance)
    return [(int(a), int(b)) for a, b in zip(peaks[:-1], peaks[1:]) if b - a >= 2]


def extract_strides(
    session: SensorSession,
    boundaries: Iterable[tuple[int, int]],
    cfg: SegmentationConfig = SegmentationConfig(),
    drops: DropCounts | None = None,
) -> list[Stride]:
    """Cut single-gait intervals out of a session and zero-pad them.

    Mixed-gait and over-length intervals are skipped and tallied in ``drops``.
    Strides of an unlabeled session carry ``label=None`` (prediction only).
    """
    drops = drops if drops is not None else DropCounts()
    out: list[Stride] = []
    for start, end in boundaries:
        tags = session.gait_tags[start:end]
        if np.any(tags != tags[0]):
            drops.mixed_gait += 1
            continue
        length = end - start
        if length > cfg.max_stride_len:
            drops.over_length += 1
            continue
        data = np.zeros((session.channels.shape[0], cfg.max_stride_len))
        data[:, :length] = session.channels[:, start:end]
        out.append(
            Stride(
                session_id=session.session_id,
                gait=Gait(tags[0]),
                data=data,
                valid_len=length,
                label=session.label,
                start_index=start,
            )
        )
    return out


def segment_session(
    session: SensorSession,
    cfg: SegmentationConfig = SegmentationConfig(),
    manifest: ChannelManifest | None = None,
    drops: DropCounts | None = None,
) -> list[Stride]:
    return extract_strides(session, detect_stride_boundaries(session, cfg, manifest), cfg, drops)


@dataclass
class SegmentedSession:
    session: SensorSession
    strides: list[Stride]
    drops: DropCounts = field(default_factory=DropCounts)

    def count(self, gait: Gait) -> int:
        return sum(s.gait is gait for s in self.strides)


def segment_sessions(
    sessions: Iterable[SensorSession],
    cfg: SegmentationConfig = SegmentationConfig(),
    manifest: ChannelManifest | None = None,
) -> list[SegmentedSession]:
    out = []
    for session in sessions:
        drops = DropCounts()
        strides = segment_session(session, cfg, manifest, drops)
        out.append(SegmentedSession(session, strides, drops))
    return out


def filter_sessions_by_trot_count(
    sessions_with_strides: Sequence[SegmentedSession],
    cfg: SegmentationConfig = SegmentationConfig(),
    gait: Gait = Gait.TROT,
) -> tuple[list[SegmentedSession], list[SegmentedSession]]:
    """Split sessions into (kept, excluded) by the minimum stride count of ``gait``."""
    kept, excluded = [], []
    for item in sessions_with_strides:
        if item.count(gait) >= cfg.min_trot_strides_per_session:
            kept.append(item)
        else:
            excluded.append(item)
    return kept, excluded


@dataclass(frozen=True)
class StrideLengthStats:
    histogram: dict[Gait, Counter]
    mean: float
    median: float
    p95: float

    @property
    def total(self) -> int:
        return sum(sum(c.values()) for c in self.histogram.values())

    def mode(self, gait: Gait) -> int:
        counts = self.histogram[gait]
        return max(sorted(counts), key=lambda k: counts[k])

    def to_csv(self) -> str:
        lines = ["gait,length,count"]
        for gait in sorted(self.histogram, key=lambda g: g.value):
            for length in sorted(self.histogram[gait]):
                lines.append(f"{gait.value},{length},{self.histogram[gait][length]}")
        return "\n".join(lines) + "\n"


def stride_length_stats(strides: Sequence[Stride]) -> StrideLengthStats:
    if not strides:
        raise ValueError("stride_length_stats needs at least one stride")
    histogram: dict[Gait, Counter] = {}
    for s in strides:
        histogram.setdefault(s.gait, Counter())[s.valid_len] += 1
    lengths = np.array([s.valid_len for s in strides], dtype=np.float64)
    return StrideLengthStats(
        histogram=histogram,
        mean=float(lengths.mean()),
        median=float(np.median(lengths)),
        p95=float(np.percentile(lengths, 95)),
    )


def stride_index_csv(segmented: Iterable[SegmentedSession]) -> str:
    lines = ["session_id,stride_idx,start,end,gait,valid_len"]
    for item in segmented:
        for i, s in enumerate(item.strides):
            lines.append(f"{s.session_id},{i},{s.start_index},{s.start_index + s.valid_len},{s.gait.value},{s.valid_len}")
    return "\n".join(lines) + "\n"
