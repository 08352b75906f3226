"""Adam and reduce-on-plateau learning-rate scheduling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        theta = params[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {theta.shape}")
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without strict improvement."""

    factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-6
    best_val_loss: float = math.inf
    epochs_since_improvement: int = 0

    def step(self, val_loss: float, current_lr: float) -> float:
        if not math.isfinite(val_loss):
            raise ValueError(f"validation loss must be finite, got {val_loss}")
        if val_loss < self.best_val_loss:
            self.best_val_loss = val_loss
            self.epochs_since_improvement = 0
            return current_lr
        self.epochs_since_improvement += 1
        if self.epochs_since_improvement >= self.patience:
            self.epochs_since_improvement = 0
            return max(current_lr * self.factor, self.min_lr)
        return current_lr


def scheduler_step(state: PlateauScheduler, val_loss: float, current_lr: float) -> float:
    return state.step(val_loss, current_lr)
