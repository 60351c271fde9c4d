"""RMSProp with a running mean of squared gradients.

acc <- rho * acc + (1 - rho) * g^2
p   <- p - lr * g / sqrt(acc + eps)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class RmsPropState:
    acc: list = field(default_factory=list)
    rho: float = 0.9
    eps: float = 1e-8


def rmsprop_init(params, rho: float = 0.9, eps: float = 1e-8) -> RmsPropState:
    """One zeroed accumulator per parameter tensor."""
    return RmsPropState(acc=[np.zeros_like(p.data) for p in params],
                        rho=rho, eps=eps)


def rmsprop_step(params, grads, state: RmsPropState, lr: float):
    """Update parameters in place; returns (params, state) for chaining."""
    if len(params) != len(grads) or len(params) != len(state.acc):
        raise ValueError("params, grads and optimizer state are misaligned")
    for p, g, acc in zip(params, grads, state.acc):
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient("non-finite gradient entry")
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        p.data -= lr * g / np.sqrt(acc + state.eps)
    return params, state
