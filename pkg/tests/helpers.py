"""Independent oracles shared by the test modules."""

from __future__ import annotations

from typing import Callable

import numpy as np

FD_STEP = 1e-5


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        fp = f()
        arr[idx] = orig - h
        fm = f()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor); the floor guards exact-zero gradients."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def brute_force_threshold(scores, labels) -> tuple[float, float]:
    """Scan every unique score with plain loops; return (threshold, F1), ties to the larger threshold."""
    scores = [float(s) for s in scores]
    labels = [int(l) for l in labels]
    best_t, best_f1 = None, -1.0
    for t in sorted(set(scores)):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        fn = sum(1 for s, y in zip(scores, labels) if s < t and y == 1)
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 >= best_f1:
            best_t, best_f1 = t, f1
    return best_t, best_f1


def hand_conv_same(x: list[float], kernel: list[float]) -> list[float]:
    """Direct 'same' cross-correlation with zero padding, single channel."""
    k = len(kernel)
    left = k // 2
    out = []
    for i in range(len(x)):
        acc = 0.0
        for j in range(k):
            pos = i + j - left
            if 0 <= pos < len(x):
                acc += x[pos] * kernel[j]
        out.append(acc)
    return out


# one "PASS|FAIL  name  detail" line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
