"""Non-negative activations, the [0,1] weight projection, and initializers.

Passive acoustic media admit only intensity-compatible nonlinearities:
threshold-like functions whose outputs are never negative. Both offset
activations here have that property for any real input. tanh is kept solely
for unconstrained baseline models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import tensor
from .tensor import Tensor, make_op

__all__ = [
    "ActivationSpec",
    "InitSpec",
    "ACTIVATIONS",
    "offset_relu",
    "offset_abs",
    "tanh",
    "apply_activation",
    "project_unit_interval",
    "init_uniform_nonneg",
    "init_xavier_uniform",
    "init_abs_xavier",
    "make_initializer",
]

ACTIVATION_KINDS = ("offset_relu", "offset_abs", "tanh")
INIT_KINDS = ("uniform_nonneg", "xavier_uniform", "abs_xavier_uniform")


@dataclass(frozen=True)
class ActivationSpec:
    """Pointwise nonlinearity: kind plus threshold offset (ignored by tanh)."""

    kind: str = "offset_abs"
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; choose from {ACTIVATION_KINDS}")
        if self.offset < 0:
            raise ValueError(f"activation offset must be >= 0, got {self.offset}")

    @property
    def non_negative(self) -> bool:
        return self.kind != "tanh"


@dataclass(frozen=True)
class InitSpec:
    """Weight initializer: non-negative uniform U(0, c) or (abs-)Xavier uniform.

    ``scale`` is the upper bound c for ``uniform_nonneg`` and the gain for the
    Xavier variants.
    """

    kind: str = "uniform_nonneg"
    scale: float = 0.05

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown initializer {self.kind!r}; choose from {INIT_KINDS}")
        if self.scale <= 0:
            raise ValueError(f"init scale must be > 0, got {self.scale}")

    @property
    def non_negative(self) -> bool:
        return self.kind in ("uniform_nonneg", "abs_xavier_uniform")


# -- activations ------------------------------------------------------------


def offset_relu(x: Tensor, c: float) -> Tensor:
    """max(x - c, 0): transmission is zero below the threshold intensity."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    c = x.data.dtype.type(c)
    shifted = x.data - c
    mask = shifted > 0  # subgradient 0 exactly at the threshold

    def backward(g):
        x._accum(g * mask)

    return make_op(np.where(mask, shifted, x.data.dtype.type(0.0)), (x,), backward)


def offset_abs(x: Tensor, c: float) -> Tensor:
    """|x - c|: attenuation grows with distance from the threshold."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    c = x.data.dtype.type(c)
    shifted = x.data - c

    def backward(g):
        x._accum(g * np.sign(shifted))

    return make_op(np.abs(shifted), (x,), backward)


def tanh(x: Tensor, c: float = 0.0) -> Tensor:
    """Signed baseline activation; the offset argument is ignored."""
    return tensor.tanh(x)


ACTIVATIONS = {
    "offset_relu": offset_relu,
    "offset_abs": offset_abs,
    "tanh": tanh,
}


def apply_activation(spec: ActivationSpec, x: Tensor) -> Tensor:
    return ACTIVATIONS[spec.kind](x, spec.offset)


# -- projection ---------------------------------------------------------------


def project_unit_interval(params: Iterable[Tensor]) -> None:
    """Clamp every entry of the given weight tensors into [0, 1], in place.

    Idempotent and value-preserving for in-range entries. Never call this on
    sinc cutoff parameters; those are frequencies, not transmissions.
    """
    for t in params:
        np.clip(t.data, 0.0, 1.0, out=t.data)


# -- initializers --------------------------------------------------------------


def init_uniform_nonneg(shape, c: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """i.i.d. samples from U(0, c)."""
    if c <= 0:
        raise ValueError(f"uniform_nonneg upper bound must be > 0, got {c}")
    return rng.uniform(0.0, c, size=shape).astype(dtype)


def _xavier_bound(shape, gain: float) -> float:
    if len(shape) < 2:
        # Vectors (e.g. initial hidden states) use fan_in = fan_out = len.
        fan_out = fan_in = shape[0] if shape else 1
    else:
        # Convention: leading dim is fan_out, trailing dim fan_in; any middle
        # dims (position-specific stacks) do not change the per-matrix fan.
        fan_out, fan_in = shape[0] if len(shape) == 2 else shape[-2], shape[-1]
    if fan_in == 0 or fan_out == 0:
        raise ValueError(f"zero fan in shape {shape}")
    return gain * np.sqrt(6.0 / (fan_in + fan_out))


def init_xavier_uniform(shape, gain: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Uniform in (-a, a) with a = gain * sqrt(6 / (fan_in + fan_out))."""
    if gain <= 0:
        raise ValueError(f"xavier gain must be > 0, got {gain}")
    a = _xavier_bound(shape, gain)
    return rng.uniform(-a, a, size=shape).astype(dtype)


def init_abs_xavier(shape, gain: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Absolute value of Xavier-uniform samples, hence in [0, a)."""
    return np.abs(init_xavier_uniform(shape, gain, rng, dtype))


def make_initializer(spec: InitSpec):
    """Bind an InitSpec to a (shape, rng, dtype) -> ndarray function."""
    if spec.kind == "uniform_nonneg":
        return lambda shape, rng, dtype=np.float64: init_uniform_nonneg(shape, spec.scale, rng, dtype)
    if spec.kind == "xavier_uniform":
        return lambda shape, rng, dtype=np.float64: init_xavier_uniform(shape, spec.scale, rng, dtype)
    return lambda shape, rng, dtype=np.float64: init_abs_xavier(shape, spec.scale, rng, dtype)
