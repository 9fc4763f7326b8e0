"""Adaptive-moment parameter updates (bias-corrected, deterministic)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, Tensor], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params: dict[str, Tensor], state: OptimizerState) -> None:
    """One in-place update from the gradients currently held by the tensors.

    Tensors with no accumulated gradient are treated as having a zero
    gradient for the moment updates.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    step_scale = state.lr / bc1
    for name, p in params.items():
        if p.data.shape != state.m[name].shape:
            raise ValueError(f"optimizer state shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        v *= state.beta2
        if p.grad is not None:
            g = p.grad
            m += (1.0 - state.beta1) * g
            v += (1.0 - state.beta2) * (g * g)
        update = v / bc2
        np.sqrt(update, out=update)
        update += state.eps
        np.divide(m, update, out=update)
        update *= step_scale
        p.data -= update


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()
