"""Class-weighted binary cross-entropy on sigmoid outputs."""

from __future__ import annotations

import numpy as np

from ..data import ClassWeights

PROB_CLAMP = 1e-7


def weighted_bce(probs: np.ndarray, labels: np.ndarray, weights: ClassWeights | None = None) -> tuple[float, np.ndarray]:
    """Return ``(loss, dloss/dlogits)``.

    loss = -(1/n) sum_i w(y_i) [y_i log p_i + (1 - y_i) log(1 - p_i)], with
    ``p`` clamped to ``[1e-7, 1 - 1e-7]``. The logit gradient is the exact
    ``w(y) (p - y) / n`` of the unclamped sigmoid.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = probs.size
    if n == 0:
        raise ValueError("weighted_bce of an empty batch")
    w = (weights or ClassWeights()).for_targets(labels)
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -np.sum(w * (labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))) / n
    return float(loss), w * (probs - labels) / n
