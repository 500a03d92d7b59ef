"""SGD with momentum and weight decay, plus a cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class SgdState:
    learning_rate: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def sgd_step(params: list[Tensor], grads: dict, state: SgdState, lr_scale: dict | None = None) -> None:
    """In-place update ``v <- m*v - lr*(g + wd*p)``, ``p <- p + v``.

    ``grads`` maps parameter tensors to gradient arrays; parameters absent from
    it are treated as having zero gradient. ``lr_scale`` optionally multiplies
    learning rate and weight decay per parameter.
    """
    for p in params:
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        scale = 1.0 if lr_scale is None else lr_scale.get(id(p), 1.0)
        v = state.velocity.get(id(p))
        if v is None:
            v = np.zeros_like(p.data)
        elif v.shape != p.shape:
            raise ValueError("velocity buffer does not match parameter shape")
        step = g + (state.weight_decay * scale) * p.data
        v = state.momentum * v - (state.learning_rate * scale) * step
        state.velocity[id(p)] = v.astype(p.dtype)
        p.data = (p.data + v).astype(p.dtype)


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / total))
