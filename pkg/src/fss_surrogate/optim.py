"""Adam over flat real parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergedOptimizationError, InvalidInputError


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("Adam betas must lie in [0, 1)")
        if not (self.lr > 0 and self.eps > 0):
            raise InvalidInputError("Adam lr and eps must be > 0")
        if np.shape(self.m) != np.shape(self.v):
            raise InvalidInputError("moment vectors differ in length")

    @classmethod
    def fresh(cls, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(state: AdamState, params, grad):
    """One bias-corrected Adam update. Returns ``(new_state, new_params)``."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise InvalidInputError("params, grad and optimizer moments must have equal length")
    if not np.all(np.isfinite(grad)):
        raise DivergedOptimizationError("non-finite gradient")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step_count=t), new_params
