"""Learnable sinc bandpass filter bank.

Each channel is an ideal bandpass between two cutoffs, truncated to a
Hamming-windowed FIR kernel. The learnable parameters are the lower cutoff
and the band width in Hz; the absolute-value reparameterization keeps bands
valid under unconstrained gradient updates, and cutoffs above Nyquist are
clamped (and logged) rather than rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, abs_elem, add, clamp_max, make_op, reshape, scale

__all__ = ["SincFilterBank", "hz_to_mel", "mel_to_hz", "mel_init", "sinc_kernels"]

logger = logging.getLogger(__name__)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class SincFilterBank:
    """Per-channel learnable low cutoff and band width, fixed kernel geometry."""

    n_channels: int
    kernel_size: int
    sample_rate: float
    f_low: Tensor = field(repr=False)
    band_width: Tensor = field(repr=False)
    _clamp_logged: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd for a symmetric kernel, got {self.kernel_size}")
        if self.f_low.shape != (self.n_channels,) or self.band_width.shape != (self.n_channels,):
            raise ValueError("f_low and band_width must both have shape (n_channels,)")

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    def effective_bands(self) -> np.ndarray:
        """Current (f1, f2) pairs in Hz after the validity mapping, shape [n, 2]."""
        f1 = np.abs(self.f_low.data)
        f2 = np.minimum(f1 + np.abs(self.band_width.data), self.nyquist)
        return np.stack([f1, f2], axis=1)


def mel_init(n_channels: int, kernel_size: int, sample_rate: float,
             f_min: float = 30.0, f_max: float | None = None,
             dtype=np.float64) -> SincFilterBank:
    """Band edges equally spaced on the mel scale between f_min and f_max.

    Channel i covers [edge_i, edge_{i+1}]; with the default f_max the last
    edge lands on Nyquist.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if not f_min < f_max:
        raise ValueError(f"need f_min < f_max, got {f_min} >= {f_max}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_channels + 1))
    edges[0], edges[-1] = f_min, f_max  # snap endpoints (mel round-trip is ~1e-10 off)
    f_low = Tensor(edges[:-1].astype(dtype), requires_grad=True)
    band_width = Tensor(np.diff(edges).astype(dtype), requires_grad=True)
    return SincFilterBank(n_channels, kernel_size, sample_rate, f_low, band_width)


def _windowed_band_diff(f1n: Tensor, f2n: Tensor, kernel_size: int) -> Tensor:
    """Hamming-windowed difference of two normalized-cutoff lowpass kernels.

    For normalized cutoff fn and tap offset m from the center, the lowpass
    kernel value is 2*fn*sinc(2*fn*m) = sin(2*pi*fn*m)/(pi*m) with limit 2*fn
    at m = 0; its derivative w.r.t. fn is 2*cos(2*pi*fn*m) for every m, which
    keeps the backward rule closed-form.
    """
    K = kernel_size
    dtype = f1n.data.dtype
    m = (np.arange(K) - (K - 1) / 2.0).astype(dtype)
    window = (0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(K) / (K - 1))).astype(dtype)

    def lowpass(fn: np.ndarray) -> np.ndarray:
        phase = 2.0 * np.pi * fn[:, None] * m[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.sin(phase) / (np.pi * m[None, :])
        vals[:, K // 2] = 2.0 * fn
        return vals

    out = (lowpass(f2n.data) - lowpass(f1n.data)) * window[None, :]

    def backward(g):
        gw = g * window[None, :]
        f2n._accum((gw * 2.0 * np.cos(2.0 * np.pi * f2n.data[:, None] * m[None, :])).sum(axis=1))
        f1n._accum(-(gw * 2.0 * np.cos(2.0 * np.pi * f1n.data[:, None] * m[None, :])).sum(axis=1))

    return make_op(out, (f1n, f2n), backward)


def sinc_kernels(bank: SincFilterBank) -> Tensor:
    """Build the [n_channels, 1, K] convolution kernels from the bank's parameters.

    Differentiable w.r.t. f_low and band_width. The effective cutoffs are
    f1 = |f_low| and f2 = min(f1 + |band_width|, Nyquist).
    """
    f1 = abs_elem(bank.f_low)
    f2_raw = add(f1, abs_elem(bank.band_width))
    # Log meaningful clamps once per bank; sub-mHz exceedances are dtype noise.
    if np.any(f2_raw.data > bank.nyquist * (1.0 + 1e-6)) and not bank._clamp_logged:
        over = np.flatnonzero(f2_raw.data > bank.nyquist)
        logger.warning("sinc channels %s exceed Nyquist (%.1f Hz); clamping upper cutoffs",
                       over.tolist(), bank.nyquist)
        bank._clamp_logged = True
    f2 = clamp_max(f2_raw, bank.nyquist)
    inv_rate = 1.0 / bank.sample_rate
    kern = _windowed_band_diff(scale(f1, inv_rate), scale(f2, inv_rate), bank.kernel_size)
    return reshape(kern, (bank.n_channels, 1, bank.kernel_size))
