"""Reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional gradient buffer. Every
differentiable operation records its inputs and a backward closure on the
output tensor; ``backward()`` on a scalar loss replays those closures in
reverse creation order, which is a valid topological order because inputs
always exist before the outputs they produce.

A graph and its tensors are confined to one thread; independent graphs may
run concurrently. One backward pass per graph: reuse raises.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "Tensor",
    "DimensionError",
    "add",
    "add_bias",
    "sub",
    "mul_elem",
    "scale",
    "matmul",
    "seg_matmul",
    "transpose",
    "reshape",
    "swapaxes",
    "pad_end",
    "stack",
    "sum_all",
    "abs_elem",
    "tanh",
    "clamp_max",
    "conv1d_valid",
    "softmax_cross_entropy",
    "no_grad",
    "make_op",
]

_SEQ = itertools.count()
_grad_enabled = True


class DimensionError(ValueError):
    """Shapes of operands are incompatible for the requested operation."""


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure forward evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense value buffer with an optional same-shape gradient buffer."""

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_backward_fn", "_seq", "_used")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self._grad = None
        self._parents = ()
        self._backward_fn = None
        self._seq = next(_SEQ)
        self._used = False

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def grad(self):
        """Gradient buffer; reads as zeros before any accumulation."""
        if self._grad is None and self.requires_grad:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __getitem__(self, idx):
        return index(self, idx)

    # -- gradient accumulation ------------------------------------------

    def _accum(self, g):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad += g

    def _accum_at(self, idx, g):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad[idx] += g

    # -- backward --------------------------------------------------------

    def backward(self):
        """Populate gradients of every tensor this scalar depends on.

        Raises if the value is not a scalar or if this graph was already
        traversed (gradients would silently double-accumulate otherwise).
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._used:
            raise RuntimeError("backward was already called on this graph; build a fresh forward pass")

        # Collect every ancestor, then run closures in reverse creation order.
        nodes = {id(self): self}
        stack_ = [self]
        while stack_:
            t = stack_.pop()
            for p in t._parents:
                if id(p) not in nodes:
                    nodes[id(p)] = p
                    stack_.append(p)
        order = sorted(nodes.values(), key=lambda t: t._seq, reverse=True)

        self._accum(np.ones_like(self.data))
        for t in order:
            if t._backward_fn is not None and t._grad is not None:
                t._backward_fn(t._grad)
                t._backward_fn = None  # release closures as we go
                t._used = True
        self._used = True


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents, backward_fn) -> Tensor:
    """Create the output tensor of a differentiable operation.

    ``backward_fn(g)`` receives the output gradient and must accumulate into
    each parent via ``_accum``/``_accum_at``. Recording is skipped when no
    parent requires grad or when inside ``no_grad()``.
    """
    parents = tuple(parents)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


# -- elementwise and structural ops ---------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum of equal-shaped tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        a._accum(g)
        b._accum(g)

    return make_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        a._accum(g)
        b._accum(-g)

    return make_op(a.data - b.data, (a, b), backward)


def add_bias(x, b) -> Tensor:
    """Add a vector bias to every row of a [batch, n] tensor."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.shape[-1:] != b.shape or b.ndim != 1:
        raise DimensionError(f"add_bias: cannot add bias {b.shape} to {x.shape}")

    def backward(g):
        x._accum(g)
        b._accum(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return make_op(x.data + b.data, (x, b), backward)


def mul_elem(a, b) -> Tensor:
    """Elementwise product of equal-shaped tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul_elem: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        a._accum(g * b.data)
        b._accum(g * a.data)

    return make_op(a.data * b.data, (a, b), backward)


def scale(a, s: float) -> Tensor:
    """Multiply by a python scalar (kept in the tensor's dtype)."""
    a = _as_tensor(a)
    s = a.data.dtype.type(s)

    def backward(g):
        a._accum(g * s)

    return make_op(a.data * s, (a,), backward)


def abs_elem(a) -> Tensor:
    """Elementwise absolute value; subgradient 0 at the kink."""
    a = _as_tensor(a)

    def backward(g):
        a._accum(g * np.sign(a.data))

    return make_op(np.abs(a.data), (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        a._accum(g * (1.0 - out_data * out_data))

    return make_op(out_data, (a,), backward)


def clamp_max(a, hi: float) -> Tensor:
    """Elementwise min(a, hi); gradient passes through where a <= hi."""
    a = _as_tensor(a)
    hi = a.data.dtype.type(hi)
    mask = a.data <= hi

    def backward(g):
        a._accum(g * mask)

    return make_op(np.minimum(a.data, hi), (a,), backward)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {a.shape}")

    def backward(g):
        a._accum(g.T)

    return make_op(np.ascontiguousarray(a.data.T), (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accum(g.reshape(a.shape))

    return make_op(a.data.reshape(shape), (a,), backward)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accum(np.swapaxes(g, axis1, axis2))

    return make_op(np.swapaxes(a.data, axis1, axis2).copy(), (a,), backward)


def index(a, idx) -> Tensor:
    """Basic slicing; gradient scatters back into the sliced region."""
    a = _as_tensor(a)

    def backward(g):
        a._accum_at(idx, g)

    return make_op(a.data[idx], (a,), backward)


def pad_end(a, count: int, axis: int = 0) -> Tensor:
    """Zero-pad ``count`` entries at the end of ``axis``."""
    a = _as_tensor(a)
    if count < 0:
        raise ValueError("pad count must be >= 0")
    pad = [(0, 0)] * a.ndim
    pad[axis] = (0, count)
    keep = tuple(slice(0, a.shape[d]) for d in range(a.ndim))

    def backward(g):
        a._accum(g[keep])

    return make_op(np.pad(a.data, pad), (a,), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack equal-shaped tensors along a new axis."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("stack of no tensors")

    def backward(g):
        slices = np.moveaxis(g, axis, 0)
        for t, gs in zip(tensors, slices):
            t._accum(gs)

    return make_op(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def sum_all(a) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    a = _as_tensor(a)

    def backward(g):
        a._accum(np.broadcast_to(g, a.shape))

    return make_op(a.data.sum(), (a,), backward)


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product [m,k] @ [k,n]; 1-D operands follow numpy vector rules."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}")

    a2 = a.data if a.ndim == 2 else a.data[None, :]
    b2 = b.data if b.ndim == 2 else b.data[:, None]
    out2 = a2 @ b2

    out_shape = out2.shape
    if a.ndim == 1:
        out_shape = out_shape[1:]
    if b.ndim == 1:
        out_shape = out_shape[:-1]

    def backward(g):
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        a._accum((g2 @ b2.T).reshape(a.shape))
        b._accum((a2.T @ g2).reshape(b.shape))

    return make_op(out2.reshape(out_shape), (a, b), backward)


def seg_matmul(seg, w) -> Tensor:
    """Position-weighted contraction over every segment at once.

    ``seg`` is [batch, n_seg, k, d_in] and ``w`` is [k, d_out, d_in]; element j
    of each segment is multiplied by its own matrix w[j] and the k products
    are summed, giving [batch, n_seg, d_out].
    """
    seg, w = _as_tensor(seg), _as_tensor(w)
    if seg.ndim != 4 or w.ndim != 3 or seg.shape[2] != w.shape[0] or seg.shape[3] != w.shape[2]:
        raise DimensionError(f"seg_matmul: incompatible shapes {seg.shape} and {w.shape}")

    def backward(g):
        seg._accum(np.einsum("bso,koj->bskj", g, w.data))
        w._accum(np.einsum("bso,bskj->koj", g, seg.data))

    return make_op(np.einsum("bskj,koj->bso", seg.data, w.data), (seg, w), backward)


# -- convolution ------------------------------------------------------------


def conv1d_valid(signal, kernels, stride: int = 1) -> Tensor:
    """Valid (no padding) cross-correlation along the last axis.

    ``signal`` is [c_in, T] or [batch, c_in, T]; ``kernels`` is
    [c_out, c_in, K]. Output length is floor((T - K) / stride) + 1.
    """
    signal, kernels = _as_tensor(signal), _as_tensor(kernels)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    squeeze = signal.ndim == 2
    x = signal.data[None] if squeeze else signal.data
    if x.ndim != 3 or kernels.ndim != 3:
        raise DimensionError(f"conv1d_valid: bad ranks for {signal.shape} and {kernels.shape}")
    if x.shape[1] != kernels.shape[1]:
        raise DimensionError(
            f"conv1d_valid: channel mismatch between signal {signal.shape} and kernels {kernels.shape}"
        )
    T, K = x.shape[2], kernels.shape[2]
    if K > T:
        raise DimensionError(f"conv1d_valid: kernel length {K} exceeds signal length {T}")

    w = kernels.data
    # Correlation == convolution with a flipped kernel; FFT keeps long
    # signals (seconds of audio) tractable.
    full = fftconvolve(x[:, None, :, :], w[None, :, :, ::-1], mode="valid", axes=3).sum(axis=2)
    out = full[..., ::stride] if stride > 1 else full
    n_full = full.shape[-1]

    def backward(g):
        g3 = g[None] if squeeze else g
        if stride > 1:
            g_up = np.zeros((g3.shape[0], g3.shape[1], n_full), dtype=g3.dtype)
            g_up[..., ::stride] = g3
        else:
            g_up = g3
        dw = fftconvolve(x[:, None, :, :], g_up[:, :, None, ::-1], mode="valid", axes=3).sum(axis=0)
        kernels._accum(dw)
        dx = fftconvolve(g_up[:, :, None, :], w[None, :, :, :], mode="full", axes=3).sum(axis=1)
        signal._accum(dx[0] if squeeze else dx)

    return make_op(out[0] if squeeze else out, (signal, kernels), backward)


# -- loss --------------------------------------------------------------------


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log softmax probability of the labelled class.

    ``logits`` is [batch, classes]; ``labels`` an integer array of class
    indices. Stabilized by max subtraction, so huge logits do not overflow.
    """
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects [batch, classes] logits, got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    probs = np.exp(log_probs)

    def backward(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        logits._accum(d * (g / n))

    return make_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain numpy softmax over the last axis (evaluation-time helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
