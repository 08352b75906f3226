"""Session and stride data model, text formats, splitting and class weights."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

N_CHANNELS = 7
SAMPLE_RATE_HZ = 100
SAMPLE_PERIOD_MS = 1000 // SAMPLE_RATE_HZ
SESSION_MAGIC = "#gaitsession v1"
COLUMN_HEADER = "t_ms,c0,c1,c2,c3,c4,c5,c6,gait"


class Gait(str, Enum):
    WALK = "walk"
    TROT = "trot"
    CANTER = "canter"
    OTHER = "other"


class Label(str, Enum):
    SOUND = "sound"
    LAME = "lame"
    UNKNOWN = "unknown"

    @property
    def target(self) -> int:
        if self is Label.UNKNOWN:
            raise ValueError("unknown label has no training target")
        return int(self is Label.LAME)


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class SessionFormatError(ValueError):
    """Raised for malformed session, manifest or split files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ChannelManifest:
    names: tuple[str, ...]
    vertical_accel_index: int

    def __post_init__(self) -> None:
        if len(self.names) != N_CHANNELS:
            raise ValueError(f"manifest needs {N_CHANNELS} channel names, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("channel names must be unique")
        if not 0 <= self.vertical_accel_index < N_CHANNELS:
            raise ValueError(f"vertical_accel_index out of range: {self.vertical_accel_index}")

    @classmethod
    def default(cls) -> "ChannelManifest":
        return cls(
            names=("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z", "speed"),
            vertical_accel_index=2,
        )

    def dumps(self) -> str:
        return ",".join(self.names) + f"\nvertical_accel_index={self.vertical_accel_index}\n"

    @classmethod
    def loads(cls, text: str) -> "ChannelManifest":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if len(lines) != 2:
            raise SessionFormatError("manifest must have a names line and a vertical_accel_index line")
        names = tuple(n.strip() for n in lines[0].split(","))
        key, sep, value = lines[1].partition("=")
        if key.strip() != "vertical_accel_index" or not sep:
            raise SessionFormatError("expected vertical_accel_index=<k>", line=2)
        try:
            index = int(value)
        except ValueError:
            raise SessionFormatError(f"bad vertical_accel_index {value!r}", line=2) from None
        try:
            return cls(names, index)
        except ValueError as exc:
            raise SessionFormatError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ChannelManifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SensorSession:
    """One continuous recording: 7 x T channel matrix plus a gait tag per sample."""

    session_id: str
    horse_id: str
    label: Label
    channels: FloatArray
    gait_tags: npt.NDArray[np.str_]
    sample_rate_hz: int = SAMPLE_RATE_HZ
    start_ms: int = 0

    def __post_init__(self) -> None:
        if not self.session_id or "," in self.session_id:
            raise ValueError(f"invalid session_id {self.session_id!r}")
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValueError(f"sample rate must be {SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        channels = np.asarray(self.channels, dtype=np.float64)
        if channels.ndim != 2 or channels.shape[0] != N_CHANNELS:
            raise ValueError(f"channel count mismatch: expected {N_CHANNELS} rows, got shape {channels.shape}")
        if channels.shape[1] < 1:
            raise ValueError("session must contain at least one sample")
        if not np.all(np.isfinite(channels)):
            raise ValueError("channel values must be finite")
        tags = np.asarray([Gait(g).value for g in self.gait_tags])
        if tags.shape != (channels.shape[1],):
            raise ValueError("gait_tags length must equal the number of samples")
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "channels", _readonly(channels.copy()))
        object.__setattr__(self, "gait_tags", _readonly(tags))

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True, eq=False)
class Stride:
    """One gait cycle zero-padded to ``max_len`` samples with a prefix mask."""

    session_id: str
    gait: Gait
    data: FloatArray
    valid_len: int
    label: Label | None
    start_index: int

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != N_CHANNELS:
            raise ValueError(f"stride data must be {N_CHANNELS} x L, got {data.shape}")
        if not 1 <= self.valid_len <= data.shape[1]:
            raise ValueError(f"valid_len {self.valid_len} outside [1, {data.shape[1]}]")
        if np.any(data[:, self.valid_len:] != 0):
            raise ValueError("padded positions must be zero")
        if self.label is Label.UNKNOWN:
            object.__setattr__(self, "label", None)
        object.__setattr__(self, "gait", Gait(self.gait))
        object.__setattr__(self, "data", _readonly(data))

    @property
    def max_len(self) -> int:
        return self.data.shape[1]

    @property
    def mask(self) -> npt.NDArray[np.float64]:
        m = np.zeros(self.max_len)
        m[: self.valid_len] = 1.0
        return m

    @property
    def prediction_only(self) -> bool:
        return self.label is None


# -- session file ---------------------------------------------------------------------


def serialize_session(session: SensorSession) -> bytes:
    buf = io.StringIO()
    buf.write(SESSION_MAGIC + "\n")
    buf.write(f"{session.session_id},{session.horse_id},{session.label.value},{session.sample_rate_hz}\n")
    buf.write(COLUMN_HEADER + "\n")
    cols = session.channels.T
    for i in range(session.n_samples):
        values = ",".join(repr(float(v)) for v in cols[i])
        buf.write(f"{session.start_ms + i * SAMPLE_PERIOD_MS},{values},{session.gait_tags[i]}\n")
    return buf.getvalue().encode("utf-8")


def parse_session(file_bytes: bytes, manifest: ChannelManifest | None = None) -> SensorSession:
    """Parse and validate a session file; errors carry 1-based line numbers.

    The manifest only fixes the meaning of the channel rows; any valid manifest
    is compatible with a 7-channel file.
    """
    try:
        text = file_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SessionFormatError(f"not UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != SESSION_MAGIC:
        raise SessionFormatError(f"malformed header, expected {SESSION_MAGIC!r}", line=1)
    if len(lines) < 3:
        raise SessionFormatError("truncated header", line=len(lines) + 1)
    meta = lines[1].split(",")
    if len(meta) != 4:
        raise SessionFormatError("malformed header: expected session_id,horse_id,label,sample_rate_hz", line=2)
    session_id, horse_id, label_tok, rate_tok = (m.strip() for m in meta)
    try:
        label = Label(label_tok)
    except ValueError:
        raise SessionFormatError(f"unknown label {label_tok!r}", line=2) from None
    try:
        rate = int(rate_tok)
    except ValueError:
        raise SessionFormatError(f"malformed sample rate {rate_tok!r}", line=2) from None
    if rate != SAMPLE_RATE_HZ:
        raise SessionFormatError(f"wrong sample rate {rate} Hz, expected {SAMPLE_RATE_HZ}", line=2)
    header = [h.strip() for h in lines[2].split(",")]
    if header != COLUMN_HEADER.split(","):
        if len(header) != N_CHANNELS + 2:
            raise SessionFormatError(
                f"channel count mismatch: column header has {len(header) - 2} channels", line=3
            )
        raise SessionFormatError(f"malformed column header, expected {COLUMN_HEADER!r}", line=3)

    rows: list[list[float]] = []
    tags: list[str] = []
    prev_t: int | None = None
    start_ms = 0
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != N_CHANNELS + 2:
            raise SessionFormatError(
                f"channel count mismatch: expected {N_CHANNELS} channels, got {len(parts) - 2}", line=lineno
            )
        try:
            t_ms = int(parts[0])
        except ValueError:
            raise SessionFormatError(f"bad timestamp {parts[0]!r}", line=lineno) from None
        if prev_t is not None and t_ms != prev_t + SAMPLE_PERIOD_MS:
            raise SessionFormatError(
                f"timestamps must increase by {SAMPLE_PERIOD_MS} ms ({prev_t} -> {t_ms})", line=lineno
            )
        if prev_t is None:
            start_ms = t_ms
        prev_t = t_ms
        try:
            values = [float(p) for p in parts[1:-1]]
        except ValueError:
            raise SessionFormatError("non-numeric channel value", line=lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise SessionFormatError("non-finite channel value", line=lineno)
        gait_tok = parts[-1].strip()
        try:
            tags.append(Gait(gait_tok).value)
        except ValueError:
            raise SessionFormatError(f"unknown gait token {gait_tok!r}", line=lineno) from None
        rows.append(values)
    if not rows:
        raise SessionFormatError("session has no samples", line=4)
    try:
        return SensorSession(
            session_id=session_id,
            horse_id=horse_id,
            label=label,
            channels=np.array(rows, dtype=np.float64).T,
            gait_tags=np.array(tags),
            sample_rate_hz=rate,
            start_ms=start_ms,
        )
    except ValueError as exc:
        raise SessionFormatError(str(exc), line=2) from None


def load_session(path: str | Path, manifest: ChannelManifest | None = None) -> SensorSession:
    path = Path(path)
    try:
        return parse_session(path.read_bytes(), manifest)
    except SessionFormatError as exc:
        raise SessionFormatError(f"{path}: {exc}") from None


def save_session(session: SensorSession, path: str | Path) -> None:
    Path(path).write_bytes(serialize_session(session))


def load_session_dir(directory: str | Path, manifest: ChannelManifest | None = None) -> list[SensorSession]:
    """Load every ``*.session.csv`` file in a directory, sorted by file name."""
    paths = sorted(Path(directory).glob("*.session.csv"))
    if not paths:
        raise FileNotFoundError(f"no *.session.csv files in {directory}")
    return [load_session(p, manifest) for p in paths]


# -- splitting -------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    assignment: Mapping[str, Split]
    seed: int

    def sessions_in(self, split: Split) -> list[str]:
        return sorted(sid for sid, s in self.assignment.items() if s is split)

    def dumps(self) -> str:
        lines = [f"#seed={self.seed}", "session_id,split"]
        lines += [f"{sid},{self.assignment[sid].value}" for sid in sorted(self.assignment)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SplitAssignment":
        seed: int | None = None
        assignment: dict[str, Split] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                if key.strip() == "seed":
                    seed = int(value)
                continue
            if line == "session_id,split":
                continue
            sid, sep, split = line.partition(",")
            if not sep:
                raise SessionFormatError("expected session_id,split", line=lineno)
            try:
                s = Split(split.strip())
            except ValueError:
                raise SessionFormatError(f"unknown split {split!r}", line=lineno) from None
            if sid in assignment:
                raise SessionFormatError(f"duplicate session {sid!r}", line=lineno)
            assignment[sid] = s
        if seed is None:
            raise SessionFormatError("missing #seed=<n> line")
        return cls(assignment, seed)

    @classmethod
    def load(cls, path: str | Path) -> "SplitAssignment":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def split_sessions(
    sessions: Sequence[SensorSession],
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SplitAssignment:
    """Label-stratified session split.

    Within each label, sessions are ordered by id, shuffled with ``seed``, and
    cut into floor(frac * n) validation and test sessions; the remainder trains.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    if any(s.label is Label.UNKNOWN for s in sessions):
        raise ValueError("sessions with unknown label cannot be split for training")
    ids = [s.session_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate session ids")
    if len(sessions) < 5:
        raise ValueError(f"need at least 5 labeled sessions to split, got {len(sessions)}")

    rng = np.random.default_rng(seed)
    assignment: dict[str, Split] = {}
    for label in (Label.SOUND, Label.LAME):
        stratum = sorted(s.session_id for s in sessions if s.label is label)
        n = len(stratum)
        n_val = math.floor(fractions[1] * n + 1e-9)
        n_test = math.floor(fractions[2] * n + 1e-9)
        if (fractions[1] > 0 and n_val == 0) or (fractions[2] > 0 and n_test == 0) or n - n_val - n_test < 1:
            raise ValueError(f"too few {label.value} sessions ({n}) to populate every split")
        order = rng.permutation(n)
        for rank, idx in enumerate(order):
            if rank < n_val:
                split = Split.VALIDATION
            elif rank < n_val + n_test:
                split = Split.TEST
            else:
                split = Split.TRAIN
            assignment[stratum[idx]] = split
    return SplitAssignment(assignment, seed)


# -- class weights ---------------------------------------------------------------------


@dataclass(frozen=True)
class ClassWeights:
    w_sound: float = 1.0
    w_lame: float = 1.0

    def __post_init__(self) -> None:
        if not (self.w_sound > 0 and self.w_lame > 0):
            raise ValueError("class weights must be positive")

    def for_targets(self, targets: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(targets) > 0.5, self.w_lame, self.w_sound)


def class_weights_from_counts(n_sound: int, n_lame: int) -> ClassWeights:
    if n_sound <= 0 or n_lame <= 0:
        raise ValueError(f"both labels must be present (sound={n_sound}, lame={n_lame})")
    n_total = n_sound + n_lame
    return ClassWeights(n_total / (2 * n_sound), n_total / (2 * n_lame))


def compute_class_weights(train_strides: Iterable[Stride]) -> ClassWeights:
    """Balanced weights n_total / (2 n_c), as in scikit-learn's ``class_weight='balanced'``."""
    labels = [s.label for s in train_strides]
    if any(lb is None for lb in labels):
        raise ValueError("training strides must be labeled")
    return class_weights_from_counts(labels.count(Label.SOUND), labels.count(Label.LAME))


@dataclass
class LabelCounts:
    sound: int = 0
    lame: int = 0

    @property
    def total(self) -> int:
        return self.sound + self.lame


def count_labels(strides: Iterable[Stride]) -> LabelCounts:
    counts = LabelCounts()
    for s in strides:
        if s.label is Label.SOUND:
            counts.sound += 1
        elif s.label is Label.LAME:
            counts.lame += 1
    return counts
