"""The stride classifier: masking, two conv blocks, masked GAP, two dense layers."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data import N_CHANNELS, Gait, Stride
from . import layers as L

LEARNABLE = (
    "conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta",
    "conv2.weight", "conv2.bias", "bn2.gamma", "bn2.beta",
    "dense1.weight", "dense1.bias", "dense_out.weight", "dense_out.bias",
)
BUFFERS = ("bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var")


@dataclass(frozen=True)
class ArchConfig:
    conv1_filters: int = 32
    conv2_filters: int = 64
    kernel_size: int = 5
    pool_width: int = 2
    dropout: float = 0.3
    dense_units: int = 64
    bn_momentum: float = 0.1
    in_channels: int = N_CHANNELS


@dataclass
class ModelParams:
    tensors: dict[str, np.ndarray]
    arch: ArchConfig = field(default_factory=ArchConfig)
    norm_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS))
    norm_std: np.ndarray = field(default_factory=lambda: np.ones(N_CHANNELS))
    stride_threshold: float = 0.5
    session_threshold: float = 0.5
    gait: Gait = Gait.TROT

    def __post_init__(self) -> None:
        if np.any(self.norm_std <= 0):
            raise ValueError("normalization std must be positive")
        for name in ("stride_threshold", "session_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def learnable(self) -> dict[str, np.ndarray]:
        return {k: self.tensors[k] for k in LEARNABLE}

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def round_to_float32(self) -> "ModelParams":
        """Snap every tensor to single precision so checkpoint round-trips are lossless."""
        out = self.copy()
        for k, v in out.tensors.items():
            out.tensors[k] = v.astype(np.float32).astype(np.float64)
        return out


def init_params(seed: int, arch: ArchConfig = ArchConfig()) -> ModelParams:
    """He-uniform fan-in weights, zero biases, identity batch norm."""
    rng = np.random.default_rng(seed)

    def he(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    c, k = arch.in_channels, arch.kernel_size
    f1, f2, d = arch.conv1_filters, arch.conv2_filters, arch.dense_units
    tensors = {
        "conv1.weight": he((f1, c, k), c * k),
        "conv1.bias": np.zeros(f1),
        "bn1.gamma": np.ones(f1),
        "bn1.beta": np.zeros(f1),
        "bn1.running_mean": np.zeros(f1),
        "bn1.running_var": np.ones(f1),
        "conv2.weight": he((f2, f1, k), f1 * k),
        "conv2.bias": np.zeros(f2),
        "bn2.gamma": np.ones(f2),
        "bn2.beta": np.zeros(f2),
        "bn2.running_mean": np.zeros(f2),
        "bn2.running_var": np.ones(f2),
        "dense1.weight": he((d, f2), f2),
        "dense1.bias": np.zeros(d),
        "dense_out.weight": he((1, d), d),
        "dense_out.bias": np.zeros(1),
    }
    return ModelParams(tensors=tensors, arch=arch, norm_mean=np.zeros(c), norm_std=np.ones(c))


# -- input preparation -----------------------------------------------------------------


def compute_norm_stats(strides: Sequence[Stride]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over the valid positions of ``strides``."""
    if not strides:
        raise ValueError("cannot compute normalization statistics of no strides")
    valid = np.concatenate([s.data[:, : s.valid_len] for s in strides], axis=1)
    mean = valid.mean(axis=1)
    std = valid.std(axis=1)
    if np.any(std <= 0):
        raise ValueError(f"zero standard deviation in channel(s) {np.flatnonzero(std <= 0).tolist()}")
    return mean, std


def normalize(stride: Stride, norm_mean: np.ndarray, norm_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """z-score a stride; padded positions are forced back to zero."""
    mask = stride.mask
    x = (stride.data - norm_mean[:, None]) / norm_std[:, None] * mask[None, :]
    return x, mask


def stack_strides(strides: Sequence[Stride], norm_mean: np.ndarray, norm_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize and stack strides into ``x [n, 7, L]`` and ``mask [n, L]``."""
    if not strides:
        length = 0
        return np.zeros((0, len(norm_mean), length)), np.zeros((0, length))
    data = np.stack([s.data for s in strides])
    mask = np.zeros((len(strides), data.shape[2]))
    for i, s in enumerate(strides):
        mask[i, : s.valid_len] = 1.0
    x = (data - norm_mean[None, :, None]) / norm_std[None, :, None] * mask[:, None, :]
    return x, mask


# -- network ---------------------------------------------------------------------------


def model_forward(
    x: np.ndarray,
    mask: np.ndarray,
    params: ModelParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Return ``(probabilities [batch], cache)``.

    In train mode the batch-norm running statistics in ``params`` are updated.
    """
    arch = params.arch
    t = params.tensors
    caches = {}
    h = x
    m = mask
    for i in (1, 2):
        # padded positions are zeroed before every conv, so the conv's own zero
        # padding and a longer zero tail look the same to it
        h = h * m[:, None, :]
        caches[f"mask{i}"] = m
        h, caches[f"conv{i}"] = L.conv1d_forward(h, t[f"conv{i}.weight"], t[f"conv{i}.bias"])
        h, caches[f"bn{i}"] = L.batchnorm_forward(
            h, t[f"bn{i}.gamma"], t[f"bn{i}.beta"], t[f"bn{i}.running_mean"], t[f"bn{i}.running_var"],
            train, arch.bn_momentum,
        )
        h, caches[f"relu{i}"] = L.relu_forward(h)
        h, caches[f"pool{i}"] = L.maxpool1d_forward(h, arch.pool_width)
        m = L.pool_mask(m, arch.pool_width)
        h, caches[f"drop{i}"] = L.dropout_forward(h, arch.dropout, train, rng)
    h, caches["gap"] = L.masked_gap_forward(h, m)
    h, caches["dense1"] = L.dense_forward(h, t["dense1.weight"], t["dense1.bias"])
    h, caches["relu3"] = L.relu_forward(h)
    logits, caches["dense_out"] = L.dense_forward(h, t["dense_out.weight"], t["dense_out.bias"])
    logits = logits[:, 0]
    caches["logits"] = logits
    return L.sigmoid(logits), caches


def model_backward(dlogits: np.ndarray, caches) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    dh, grads["dense_out.weight"], grads["dense_out.bias"] = L.dense_backward(dlogits[:, None], caches["dense_out"])
    dh = L.relu_backward(dh, caches["relu3"])
    dh, grads["dense1.weight"], grads["dense1.bias"] = L.dense_backward(dh, caches["dense1"])
    dh = L.masked_gap_backward(dh, caches["gap"])
    for i in (2, 1):
        dh = L.dropout_backward(dh, caches[f"drop{i}"])
        dh = L.maxpool1d_backward(dh, caches[f"pool{i}"])
        dh = L.relu_backward(dh, caches[f"relu{i}"])
        dh, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = L.batchnorm_backward(dh, caches[f"bn{i}"])
        dh, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = L.conv1d_backward(dh, caches[f"conv{i}"])
        dh = dh * caches[f"mask{i}"][:, None, :]
    return grads


def predict_proba(params: ModelParams, strides: Sequence[Stride], batch_size: int = 512) -> np.ndarray:
    """Inference-mode probabilities for ``strides``."""
    x, mask = stack_strides(strides, params.norm_mean, params.norm_std)
    out = [model_forward(x[i : i + batch_size], mask[i : i + batch_size], params)[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)
