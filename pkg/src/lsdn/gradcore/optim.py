"""Adam optimizer with a per-iteration multiplicative learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "adam_step", "TrainingError"]


class TrainingError(RuntimeError):
    """Raised when optimization hits a non-finite quantity."""


@dataclass
class AdamState:
    """Moment accumulators plus the decayed-learning-rate schedule.

    The effective learning rate of the (k+1)-th update is lr * decay**k,
    so after k steps the next update uses lr * decay**k.
    """

    lr: float = 5e-4
    decay: float = 0.999
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def effective_lr(self) -> float:
        return self.lr * self.decay ** self.step


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]):
    """Apply one Adam update in place; returns (params, state).

    Moments are keyed by parameter name and created on first use.  A
    non-finite gradient aborts with the offending parameter's name.
    """
    lr_t = state.effective_lr()
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise TrainingError(
                f"gradient shape {g.shape} != parameter shape {p.data.shape} for '{name}'")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for '{name}'")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= lr_t * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
