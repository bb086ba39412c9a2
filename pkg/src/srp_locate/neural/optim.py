"""Adam with bias correction over a :class:`ModelWeights` parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelWeights


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_weights(cls, weights: ModelWeights, **kwargs) -> "AdamState":
        m = {n: np.zeros_like(p) for n, p in weights.params.items()}
        v = {n: np.zeros_like(p) for n, p in weights.params.items()}
        return cls(m=m, v=v, **kwargs)


def adam_step(weights: ModelWeights, grads: dict, state: AdamState) -> tuple[ModelWeights, AdamState]:
    """One Adam update, applied in place; raises on non-finite gradients."""
    for name, g in grads.items():
        if g.shape != weights[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {weights[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name} at step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1 - b1 ** state.step
    corr2 = 1 - b2 ** state.step
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        weights.params[name] -= update.astype(weights.params[name].dtype)
    return weights, state
