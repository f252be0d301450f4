"""Projected Adam: the constrained training step.

Order is fixed: clip gradients to a global norm, apply the bias-corrected
Adam update, then clamp weight tensors back into [0,1]. Sinc cutoff
parameters are frequencies, not transmissions, and are never projected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .constraints import project_unit_interval
from .tensor import Tensor

__all__ = [
    "AdamState",
    "TrainingDivergedError",
    "clip_grad_global_norm",
    "adam_step",
    "constrained_step",
    "lr_schedule",
]


class TrainingDivergedError(RuntimeError):
    """Loss or gradients became non-finite."""


def clip_grad_global_norm(params: Sequence[Tensor], max_norm: float = 1.0) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the applied scale factor (1.0 when no clipping was needed).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for p in params:
        g = p.grad
        if g is not None:
            total += float(np.sum(g.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if not np.isfinite(norm):
        raise TrainingDivergedError(f"gradient norm is not finite ({norm})")
    if norm <= max_norm:
        return 1.0
    scl = max_norm / norm
    for p in params:
        if p._grad is not None:
            p._grad *= p.dtype.type(scl)
    return scl


@dataclass
class AdamState:
    """Per-model optimizer state; step count and moment buffers per parameter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)  # id(param) -> first moment
    v: dict = field(default_factory=dict)  # id(param) -> second moment


def adam_step(state: AdamState, params: Sequence[Tensor]) -> None:
    """Bias-corrected Adam update, in place on each parameter's data."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params:
        g = p.grad
        if g is None:
            continue
        key = id(p)
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        if m.shape != g.shape:
            raise ValueError(f"optimizer state shape {m.shape} does not match gradient {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)


def constrained_step(state: AdamState, params: Sequence[Tensor],
                     weight_params: Iterable[Tensor], constrained: bool,
                     max_grad_norm: float = 1.0) -> float:
    """One full training step: clip -> Adam -> (if constrained) project weights.

    Returns the gradient scale applied by clipping.
    """
    scl = clip_grad_global_norm(params, max_grad_norm)
    adam_step(state, params)
    if constrained:
        project_unit_interval(weight_params)
    return scl


def lr_schedule(epoch: int, total_epochs: int, fine_tune_epochs: int = 10,
                lr: float = 1e-3, fine_tune_lr: float = 1e-4) -> float:
    """Base rate for most of training, reduced rate for the final epochs."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if epoch >= total_epochs - fine_tune_epochs:
        return fine_tune_lr
    return lr
