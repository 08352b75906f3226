"""Forward/backward pairs for the 1D CNN layers.

Tensors are ``[batch, channels, length]`` float64 arrays. Each ``*_forward``
returns its output and a cache consumed by the matching ``*_backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5


# -- convolution -----------------------------------------------------------------------


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    """'Same' cross-correlation: out[b,f,i] = bias[f] + sum_{c,k} x[b,c,i+k-K//2] w[f,c,k]."""
    b, c, length = x.shape
    f, c_w, k = kernels.shape
    if c != c_w or bias.shape != (f,):
        raise ValueError(f"conv1d shape mismatch: x {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    left = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (left, k - 1 - left)))
    # cols: [b, length, c, k]
    cols = sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3).reshape(b * length, c * k)
    out = cols @ kernels.reshape(f, c * k).T + bias
    out = out.reshape(b, length, f).transpose(0, 2, 1)
    return np.ascontiguousarray(out), (cols, x.shape, kernels)


def conv1d_backward(dout: np.ndarray, cache):
    cols, x_shape, kernels = cache
    b, c, length = x_shape
    f, _, k = kernels.shape
    dmat = dout.transpose(0, 2, 1).reshape(b * length, f)
    dkernels = (dmat.T @ cols).reshape(f, c, k)
    dbias = dmat.sum(axis=0)
    dcols = (dmat @ kernels.reshape(f, c * k)).reshape(b, length, c, k)
    left = k // 2
    dxp = np.zeros((b, c, length + k - 1))
    for j in range(k):
        dxp[:, :, j : j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
    dx = dxp[:, :, left : left + length]
    return np.ascontiguousarray(dx), dkernels, dbias


# -- batch normalization ---------------------------------------------------------------


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
):
    """Per-feature normalization over (batch, length).

    In train mode the running statistics are updated in place with
    ``running = (1 - momentum) * running + momentum * batch`` (unbiased batch
    variance, as PyTorch does).
    """
    if train:
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise ValueError("batchnorm in train mode needs more than one value per feature")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / (n - 1)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout: np.ndarray, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = np.sum(dout * xhat, axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    if not train:
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    mean_dxhat = dxhat.mean(axis=(0, 2), keepdims=True)
    mean_dxhat_xhat = np.mean(dxhat * xhat, axis=(0, 2), keepdims=True)
    dx = inv_std[None, :, None] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


# -- pointwise -------------------------------------------------------------------------


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- pooling ---------------------------------------------------------------------------


def maxpool1d_forward(x: np.ndarray, width: int = 2):
    """Non-overlapping max pooling; a short tail window is pooled on its own.

    With width 2 an odd final element passes through unchanged.
    """
    b, c, length = x.shape
    if length < 2:
        raise ValueError("maxpool1d needs length >= 2")
    n_out = -(-length // width)
    pad = n_out * width - length
    if pad:
        xp = np.concatenate([x, np.full((b, c, pad), -np.inf)], axis=2)
    else:
        xp = x
    windows = xp.reshape(b, c, n_out, width)
    arg = windows.argmax(axis=3)
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    return out, (arg, x.shape, width)


def maxpool1d_backward(dout: np.ndarray, cache):
    arg, (b, c, length), width = cache
    n_out = arg.shape[2]
    dwin = np.zeros((b, c, n_out, width))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=3)
    return dwin.reshape(b, c, n_out * width)[:, :, :length]


def pool_mask(mask: np.ndarray, width: int = 2) -> np.ndarray:
    """Downsample a ``[batch, length]`` validity mask: valid iff any source is valid."""
    b, length = mask.shape
    n_out = -(-length // width)
    pad = n_out * width - length
    mp = np.concatenate([mask, np.zeros((b, pad))], axis=1) if pad else mask
    return mp.reshape(b, n_out, width).max(axis=2)


# -- dropout ---------------------------------------------------------------------------


def dropout_forward(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout; identity in inference mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout: np.ndarray, cache):
    return dout if cache is None else dout * cache


# -- masked global average pooling -----------------------------------------------------


def masked_gap_forward(x: np.ndarray, mask: np.ndarray):
    """Average each feature over valid positions only. ``mask`` is ``[batch, length]``."""
    counts = mask.sum(axis=1)
    if np.any(counts <= 0):
        raise ValueError("masked_gap: a sample has no valid positions")
    out = np.einsum("bfl,bl->bf", x, mask) / counts[:, None]
    return out, (mask, counts)


def masked_gap_backward(dout: np.ndarray, cache):
    mask, counts = cache
    return dout[:, :, None] * (mask / counts[:, None])[:, None, :]


# -- dense -----------------------------------------------------------------------------


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """``weight`` is ``[out, in]``."""
    return x @ weight.T + bias, (x, weight)


def dense_backward(dout: np.ndarray, cache):
    x, weight = cache
    return dout @ weight, dout.T @ x, dout.sum(axis=0)
