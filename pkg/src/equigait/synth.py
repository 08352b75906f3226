"""Synthetic IMU sessions with exact stride boundaries and tunable lameness.

Each stride of period ``P`` (forced even) is a per-channel mixture of the odd
harmonics 1 and 3 of the stride frequency. Odd harmonics make the sound signal
half-wave antisymmetric, so both half-strides carry the same energy. Lameness
scales every second half-stride by ``1 - asymmetry`` and advances its stride
phase by ``asymmetry * pi / 8``. The vertical-acceleration channel uses cosine
terms with zero phase so that every stride starts on its dominant peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    N_CHANNELS,
    SAMPLE_RATE_HZ,
    ChannelManifest,
    Gait,
    Label,
    SensorSession,
    save_session,
)

DEFAULT_PERIODS = {Gait.WALK: 96, Gait.TROT: 80, Gait.CANTER: 60, Gait.OTHER: 80}
HARMONICS = (1, 3)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    gait_plan: tuple[tuple[Gait, float], ...] = ((Gait.WALK, 10.0), (Gait.TROT, 60.0), (Gait.CANTER, 10.0))
    duration_s: float | None = None
    stride_period_samples: dict = field(default_factory=lambda: dict(DEFAULT_PERIODS))
    period_jitter: float = 0.05
    asymmetry: float = 0.0
    noise_std: float = 0.05
    lead_samples: int = 20
    mixture_seed: int | None = None
    session_variation: float = 0.1
    manifest: ChannelManifest = field(default_factory=ChannelManifest.default)

    def __post_init__(self) -> None:
        if not 0.0 <= self.asymmetry <= 1.0:
            raise ValueError(f"asymmetry must lie in [0, 1], got {self.asymmetry}")
        if self.noise_std < 0 or self.period_jitter < 0 or self.period_jitter >= 1:
            raise ValueError("noise_std must be >= 0 and period_jitter in [0, 1)")
        if not 0.0 <= self.session_variation < 1.0:
            raise ValueError("session_variation must lie in [0, 1)")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        for gait, period in self.stride_period_samples.items():
            if period < 8:
                raise ValueError(f"stride period for {gait} too short: {period}")

    @property
    def plan(self) -> tuple[tuple[Gait, float], ...]:
        if self.duration_s is not None:
            return ((Gait.TROT, self.duration_s),)
        return tuple((Gait(g), float(d)) for g, d in self.gait_plan)


@dataclass(frozen=True)
class SynthGroundTruth:
    boundaries: list[tuple[int, int, Gait]]
    label: Label
    asymmetry: float = 0.0

    @property
    def stride_starts(self) -> np.ndarray:
        return np.array([b[0] for b in self.boundaries], dtype=np.int64)

    @property
    def boundary_points(self) -> np.ndarray:
        """Every stride start plus the end of the final stride."""
        if not self.boundaries:
            return np.zeros(0, dtype=np.int64)
        return np.append(self.stride_starts, self.boundaries[-1][1])


def _mixture(rng: np.random.Generator, vertical: int) -> tuple[np.ndarray, np.ndarray]:
    amps = np.empty((N_CHANNELS, len(HARMONICS)))
    phases = rng.uniform(0.0, 2 * np.pi, size=(N_CHANNELS, len(HARMONICS)))
    amps[:, 0] = rng.uniform(0.8, 1.2, size=N_CHANNELS)
    amps[:, 1] = amps[:, 0] * rng.uniform(0.0, 0.3, size=N_CHANNELS)
    # single dominant maximum per stride, located at the stride start
    amps[vertical, 1] = amps[vertical, 0] * rng.uniform(0.0, 0.1)
    phases[vertical] = 0.0
    return amps, phases


def session_mixture(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Harmonic amplitudes and phases for one session.

    With ``mixture_seed`` set, sessions share one template and differ only by a
    relative amplitude/phase perturbation of size ``session_variation``.
    """
    vertical = cfg.manifest.vertical_accel_index
    if cfg.mixture_seed is None:
        return _mixture(rng, vertical)
    amps, phases = _mixture(np.random.default_rng(cfg.mixture_seed), vertical)
    v = cfg.session_variation
    amps = amps * rng.uniform(1.0 - v, 1.0 + v, size=amps.shape)
    jitter = rng.uniform(-v, v, size=phases.shape)
    jitter[vertical] = 0.0
    return amps, phases + jitter


def _stride_wave(period: int, amps: np.ndarray, phases: np.ndarray, asymmetry: float) -> np.ndarray:
    half = period // 2
    u = np.arange(period) / period
    u[half:] += asymmetry / 16.0
    wave = np.zeros((N_CHANNELS, period))
    for j, h in enumerate(HARMONICS):
        wave += amps[:, j : j + 1] * np.cos(2 * np.pi * h * u[None, :] + phases[:, j : j + 1])
    wave[:, half:] *= 1.0 - asymmetry
    return wave


def generate_session(cfg: SynthConfig, session_id: str = "synth", horse_id: str = "horse") -> tuple[SensorSession, SynthGroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    amps, phases = session_mixture(cfg, rng)

    pieces: list[np.ndarray] = [np.zeros((N_CHANNELS, cfg.lead_samples))]
    tags: list[str] = [Gait.OTHER.value] * cfg.lead_samples
    boundaries: list[tuple[int, int, Gait]] = []
    cursor = cfg.lead_samples
    for gait, duration in cfg.plan:
        base = cfg.stride_period_samples[gait]
        target = int(round(duration * SAMPLE_RATE_HZ))
        used = 0
        while used < target:
            jitter = rng.uniform(-cfg.period_jitter, cfg.period_jitter)
            period = 2 * int(round(base * (1.0 + jitter) / 2.0))
            pieces.append(_stride_wave(period, amps, phases, cfg.asymmetry))
            tags.extend([gait.value] * period)
            boundaries.append((cursor, cursor + period, gait))
            cursor += period
            used += period
    pieces.append(np.zeros((N_CHANNELS, cfg.lead_samples)))
    tags.extend([Gait.OTHER.value] * cfg.lead_samples)

    channels = np.concatenate(pieces, axis=1)
    if cfg.noise_std > 0:
        channels = channels + rng.normal(0.0, cfg.noise_std, size=channels.shape)
    label = Label.LAME if cfg.asymmetry > 0 else Label.SOUND
    session = SensorSession(
        session_id=session_id,
        horse_id=horse_id,
        label=label,
        channels=channels,
        gait_tags=np.array(tags),
    )
    return session, SynthGroundTruth(boundaries, label, cfg.asymmetry)


def half_stride_energy_ratio(session: SensorSession, truth: SynthGroundTruth, gait: Gait = Gait.TROT) -> float:
    """Energy of second half-strides over energy of first half-strides, all channels."""
    first = second = 0.0
    for start, end, g in truth.boundaries:
        if g is not gait:
            continue
        mid = start + (end - start) // 2
        first += float(np.sum(session.channels[:, start:mid] ** 2))
        second += float(np.sum(session.channels[:, mid:end] ** 2))
    if first == 0.0:
        raise ValueError(f"no {gait.value} strides with energy in session")
    return second / first


@dataclass
class SynthCorpus:
    sessions: list[SensorSession]
    truths: dict[str, SynthGroundTruth]
    manifest: ChannelManifest

    def ground_truth_csv(self) -> str:
        lines = ["session_id,stride_idx,start,end,gait,label,asymmetry"]
        for s in self.sessions:
            truth = self.truths[s.session_id]
            for i, (a, b, g) in enumerate(truth.boundaries):
                lines.append(f"{s.session_id},{i},{a},{b},{g.value},{truth.label.value},{truth.asymmetry!r}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for s in self.sessions:
                save_session(s, out / f"{s.session_id}.session.csv")
            self.manifest.save(out / "manifest.txt")
            (out / "ground_truth.csv").write_text(self.ground_truth_csv(), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"failed writing synthetic corpus to {exc.filename or out}: {exc.strerror}") from exc
        return out


def generate_corpus(
    n_sound: int,
    n_lame: int,
    base_cfg: SynthConfig = SynthConfig(),
    seed: int = 0,
    asymmetry_range: tuple[float, float] = (0.2, 0.4),
    n_horses: int | None = None,
    out_dir: str | Path | None = None,
) -> SynthCorpus:
    """Generate ``n_sound + n_lame`` sessions with per-session seeds drawn from ``seed``."""
    if n_sound < 1 or n_lame < 1:
        raise ValueError("need at least one sound and one lame session")
    lo, hi = asymmetry_range
    if not 0 < lo <= hi <= 1:
        raise ValueError(f"bad asymmetry range {asymmetry_range}")
    n_total = n_sound + n_lame
    n_horses = n_horses or max(1, n_total // 3)
    rng = np.random.default_rng(seed)
    mixture_seed = int(rng.integers(0, 2**32)) if base_cfg.mixture_seed is None else base_cfg.mixture_seed
    session_seeds = rng.integers(0, 2**32, size=n_total, dtype=np.uint64)
    deltas = rng.uniform(lo, hi, size=n_lame)
    sessions, truths = [], {}
    for i in range(n_total):
        lame = i >= n_sound
        cfg = replace(
            base_cfg,
            seed=int(session_seeds[i]),
            mixture_seed=mixture_seed,
            asymmetry=float(deltas[i - n_sound]) if lame else 0.0,
        )
        sid = f"S{i:03d}"
        session, truth = generate_session(cfg, session_id=sid, horse_id=f"H{i % n_horses:02d}")
        sessions.append(session)
        truths[sid] = truth
    corpus = SynthCorpus(sessions, truths, base_cfg.manifest)
    if out_dir is not None:
        corpus.write(out_dir)
    return corpus


def boundary_recall(detected: Sequence[int], truth: Sequence[int], tol: int = 5) -> float:
    """Fraction of true boundary points with a detected point within ``tol`` samples."""
    truth = np.asarray(truth)
    if truth.size == 0:
        return 1.0
    detected = np.asarray(detected)
    if detected.size == 0:
        return 0.0
    nearest = np.min(np.abs(detected[None, :] - truth[:, None]), axis=1)
    return float(np.mean(nearest <= tol))
