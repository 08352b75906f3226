from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from equigait.data import ChannelManifest, Gait, Label, SensorSession, Stride  # noqa: E402
from equigait.nn.model import ArchConfig  # noqa: E402

SMALL_ARCH = ArchConfig(conv1_filters=3, conv2_filters=4, kernel_size=5, dropout=0.3, dense_units=5)


@pytest.fixture
def manifest() -> ChannelManifest:
    return ChannelManifest.default()


def make_session(n: int = 50, label: Label = Label.SOUND, gait: Gait = Gait.TROT, sid: str = "s1", seed: int = 0) -> SensorSession:
    rng = np.random.default_rng(seed)
    return SensorSession(
        session_id=sid,
        horse_id="h1",
        label=label,
        channels=rng.normal(size=(7, n)),
        gait_tags=np.array([gait.value] * n),
    )


def make_stride(valid_len: int = 80, label: Label | None = Label.SOUND, seed: int = 0, sid: str = "s1", gait: Gait = Gait.TROT, start: int = 0) -> Stride:
    rng = np.random.default_rng(seed)
    data = np.zeros((7, 100))
    data[:, :valid_len] = rng.normal(size=(7, valid_len))
    return Stride(session_id=sid, gait=gait, data=data, valid_len=valid_len, label=label, start_index=start)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
