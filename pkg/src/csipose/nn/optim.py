"""Adam optimizer over a ParamStore."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from csipose.nn.params import ParamStore


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store: ParamStore, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, t in store.trainable_items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state


def adam_step(store: ParamStore, state: AdamState):
    """One bias-corrected Adam update; gradients are cleared afterward."""
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for name, t in store.trainable_items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        t.data -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    store.zero_grad()
