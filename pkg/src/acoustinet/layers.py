"""Network building blocks and model composition.

Three variants share the same constrained substrate (bias-free layers,
non-negative activations, weights that live in [0,1] after projection):

* ``rnn`` — a single recurrent layer over the raw intensity sequence,
  followed by a linear classifier on the final hidden state.
* ``hsrnn`` — a stack of hierarchical-subsampling recurrent layers, each
  consuming non-overlapping length-k segments through position-specific
  weight matrices, then one dense layer and a linear classifier.
* ``sinc_hsrnn`` — a learnable sinc bandpass front end feeding the HS stack,
  then two dense layers and a linear classifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .constraints import ActivationSpec, InitSpec, apply_activation, make_initializer
from .sinc import SincFilterBank, mel_init, sinc_kernels
from .tensor import Tensor

__all__ = [
    "VARIANTS",
    "SincConfig",
    "ModelSpec",
    "RnnCell",
    "HsLayer",
    "DenseLayer",
    "AcousticModel",
    "EmptySequenceError",
    "StructuralError",
    "rnn_forward",
    "hs_layer_forward",
    "dense_forward",
    "build_model",
    "model_forward",
]

VARIANTS = ("rnn", "hsrnn", "sinc_hsrnn")


class EmptySequenceError(ValueError):
    """A recurrent layer received a zero-length sequence."""


class StructuralError(ValueError):
    """Model spec and parameters disagree about the architecture."""


@dataclass(frozen=True)
class SincConfig:
    n_channels: int = 5
    kernel_size: int = 101
    sample_rate: float = 8000.0
    f_min: float = 30.0

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ValueError(f"sinc kernel_size must be odd, got {self.kernel_size}")
        if self.n_channels < 1:
            raise ValueError("sinc bank needs at least one channel")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description; `build_model` turns it into parameters."""

    variant: str
    hidden_sizes: tuple
    n_classes: int
    constrained: bool = True
    activation: ActivationSpec = ActivationSpec("offset_abs", 0.05)
    init: InitSpec = InitSpec("uniform_nonneg", 0.05)
    dense_sizes: tuple = ()
    subsample_factor: int = 8
    input_dim: int = 1
    sinc: Optional[SincConfig] = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "dense_sizes", tuple(int(d) for d in self.dense_sizes))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if any(h < 1 for h in self.hidden_sizes) or not self.hidden_sizes:
            raise ValueError(f"hidden_sizes must be positive ints, got {self.hidden_sizes}")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.variant == "rnn":
            if len(self.hidden_sizes) != 1:
                raise ValueError("rnn variant takes exactly one hidden size")
            if self.dense_sizes:
                raise ValueError("rnn variant has no intermediate dense layers")
        else:
            if len(self.hidden_sizes) < 3:
                raise ValueError(f"{self.variant} needs at least 3 recurrent layers, got {len(self.hidden_sizes)}")
            expected = 1 if self.variant == "hsrnn" else 2
            if len(self.dense_sizes) != expected:
                raise ValueError(f"{self.variant} takes exactly {expected} dense size(s), got {self.dense_sizes}")
            if self.subsample_factor < 1:
                raise ValueError("subsample_factor must be >= 1")
        if self.variant == "sinc_hsrnn" and self.sinc is None:
            raise ValueError("sinc_hsrnn requires a sinc config")
        if self.constrained and not self.activation.non_negative:
            raise ValueError("constrained models require a non-negative activation (offset_relu/offset_abs)")


@dataclass
class RnnCell:
    w_in: Tensor  # [H, D]
    w_rec: Tensor  # [H, H]
    bias: Optional[Tensor]
    activation: ActivationSpec
    h0: np.ndarray  # fixed small random initial state, not trained

    @property
    def hidden_size(self) -> int:
        return self.w_rec.shape[0]


@dataclass
class HsLayer:
    w_pos: Tensor  # [k, H_out, H_in], one matrix per position in a segment
    w_rec: Tensor  # [H_out, H_out]
    bias: Optional[Tensor]
    activation: ActivationSpec

    @property
    def factor(self) -> int:
        return self.w_pos.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_pos.shape[1]


@dataclass
class DenseLayer:
    w: Tensor  # [out, in]
    bias: Optional[Tensor]
    activation: Optional[ActivationSpec]  # None = linear


def _promote_seq(x) -> tuple:
    """Accept [T, D] or [B, T, D]; return (tensor [B, T, D], had_batch)."""
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim == 2:
        return T.reshape(t, (1,) + t.shape), False
    if t.ndim == 3:
        return t, True
    raise T.DimensionError(f"expected a [T, D] or [batch, T, D] sequence, got shape {t.shape}")


def _initial_state(h0, batch: int, hidden: int, dtype) -> Tensor:
    if h0 is None:
        return Tensor(np.zeros((batch, hidden), dtype=dtype))
    if isinstance(h0, Tensor):
        h0 = h0.data
    h0 = np.asarray(h0, dtype=dtype)
    if h0.ndim == 1:
        h0 = np.broadcast_to(h0, (batch, hidden)).copy()
    if h0.shape != (batch, hidden):
        raise T.DimensionError(f"initial state shape {h0.shape} does not match (batch={batch}, hidden={hidden})")
    return Tensor(h0)


def _recurrence(all_proj: Tensor, w_rec: Tensor, activation: ActivationSpec, h0) -> Tensor:
    """Shared recurrence: h_s = act(all_proj[s] + W_rec h_{s-1}).

    ``all_proj`` is the precomputed input projection for every step,
    [batch, steps, hidden]. Both the plain recurrent cell and the
    hierarchical-subsampling layer reduce to this loop, so a subsampling
    factor of 1 reproduces the plain cell bit for bit.
    """
    b, n_steps, hidden = all_proj.shape
    h = _initial_state(h0, b, hidden, all_proj.dtype)
    w_rec_t = T.transpose(w_rec)
    states = []
    for s in range(n_steps):
        pre = T.add(all_proj[:, s, :], T.matmul(h, w_rec_t))
        h = apply_activation(activation, pre)
        states.append(h)
    return T.stack(states, axis=1)


def rnn_forward(cell: RnnCell, x, h0=None) -> Tensor:
    """Full hidden sequence of a simple recurrent layer.

    h_t = act(W_in x_t + W_rec h_{t-1} [+ bias]); input [T, D] or [B, T, D],
    output [T, H] or [B, T, H]. The classifier consumes the final state.
    """
    x, had_batch = _promote_seq(x)
    b, t_len, d = x.shape
    if t_len == 0:
        raise EmptySequenceError("recurrent layer received an empty sequence")
    hidden = cell.hidden_size
    all_proj = T.seg_matmul(T.reshape(x, (b, t_len, 1, d)),
                            T.reshape(cell.w_in, (1, hidden, d)))
    if cell.bias is not None:
        all_proj = T.add_bias(all_proj, cell.bias)
    out = _recurrence(all_proj, cell.w_rec, cell.activation,
                      cell.h0 if h0 is None else h0)
    return out if had_batch else out[0]


def hs_layer_forward(layer: HsLayer, x, h0=None) -> Tensor:
    """Hierarchical-subsampling recurrence over non-overlapping segments.

    The sequence is zero-padded at the end to a multiple of the subsampling
    factor k, then each element of a segment goes through its own
    position-specific matrix:

        h_s = act(sum_j W_pos[j] x_{s,j} + W_rec h_{s-1} [+ bias])

    Input [T, D] or [B, T, D]; output [S, H] or [B, S, H] with S = ceil(T/k).
    """
    x, had_batch = _promote_seq(x)
    b, t_len, d = x.shape
    if t_len == 0:
        raise EmptySequenceError("recurrent layer received an empty sequence")
    k = layer.factor
    n_seg = math.ceil(t_len / k)
    pad = n_seg * k - t_len
    if pad:
        x = T.pad_end(x, pad, axis=1)

    all_proj = T.seg_matmul(T.reshape(x, (b, n_seg, k, d)), layer.w_pos)
    if layer.bias is not None:
        all_proj = T.add_bias(all_proj, layer.bias)
    out = _recurrence(all_proj, layer.w_rec, layer.activation, h0)
    return out if had_batch else out[0]


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    y = T.matmul(x, T.transpose(layer.w))
    if layer.bias is not None:
        y = T.add_bias(y, layer.bias)
    if layer.activation is not None:
        y = apply_activation(layer.activation, y)
    return y


class AcousticModel:
    """A built network: spec, parameter tensors, and the forward pass.

    Parameters are registered under stable dotted names so that optimizer
    state, checkpoints, and blueprints all agree on ordering. Kinds:
    ``weight`` (projected in constrained mode), ``bias``, ``sinc_freq``
    (never projected), ``buffer`` (not optimized, e.g. the fixed initial
    hidden state).
    """

    def __init__(self, spec: ModelSpec, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.sinc_bank: Optional[SincFilterBank] = None
        self.rnn_cell: Optional[RnnCell] = None
        self.hs_layers: list = []
        self.dense_layers: list = []
        self.out_layer: Optional[DenseLayer] = None
        self._registry: list = []  # (name, Tensor, kind)

    # -- parameter registry --------------------------------------------------

    def _register(self, name: str, data: np.ndarray, kind: str) -> Tensor:
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=(kind != "buffer"))
        self._registry.append((name, t, kind))
        return t

    def named_parameters(self):
        """(name, tensor) pairs for every trainable parameter, stable order."""
        return [(n, t) for n, t, k in self._registry if k != "buffer"]

    def all_entries(self):
        """(name, tensor, kind) including non-trainable buffers."""
        return list(self._registry)

    def parameter_kind(self, name: str) -> str:
        for n, _, k in self._registry:
            if n == name:
                return k
        raise KeyError(name)

    def weight_tensors(self):
        """Tensors subject to the [0,1] transmission constraint."""
        return [t for _, t, k in self._registry if k == "weight"]

    def zero_grad(self):
        for _, t, _ in self._registry:
            t.zero_grad()

    def n_parameters(self) -> int:
        return sum(t.size for _, t in self.named_parameters())

    # -- forward ---------------------------------------------------------------

    def _prep_input(self, x) -> Tensor:
        arr = x.data if isinstance(x, Tensor) else np.asarray(x)
        arr = arr.astype(self.dtype, copy=False)
        if self.spec.variant == "sinc_hsrnn":
            # Conv layout [batch, channels, T].
            if arr.ndim == 1:
                arr = arr[None, None, :]
            elif arr.ndim == 2:
                arr = arr[:, None, :]
            elif arr.ndim != 3:
                raise T.DimensionError(f"cannot interpret input shape {arr.shape} as audio")
            return Tensor(arr)
        # Sequence layout [batch, T, features].
        if arr.ndim == 1:
            arr = arr[None, :, None]
        elif arr.ndim == 2:
            arr = arr[:, :, None]
        elif arr.ndim != 3:
            raise T.DimensionError(f"cannot interpret input shape {arr.shape} as a sequence")
        if arr.shape[-1] != self.spec.input_dim:
            raise StructuralError(
                f"input feature dim {arr.shape[-1]} does not match spec input_dim {self.spec.input_dim}")
        return Tensor(arr)

    def forward(self, x, return_hidden: bool = False):
        """Class logits [batch, n_classes]; softmax lives in the loss/eval.

        With ``return_hidden`` also returns the hidden sequence tensor of
        every recurrent layer (for invariant checks and diagnostics).
        """
        xt = self._prep_input(x)
        hidden = []
        if self.spec.variant == "rnn":
            seq = rnn_forward(self.rnn_cell, xt)
            hidden.append(seq)
        else:
            if self.spec.variant == "sinc_hsrnn":
                kernels = sinc_kernels(self.sinc_bank)
                conv = T.conv1d_valid(xt, kernels, stride=1)
                seq = T.swapaxes(conv, 1, 2)  # [B, T', channels]
            else:
                seq = xt
            for layer in self.hs_layers:
                seq = hs_layer_forward(layer, seq)
                hidden.append(seq)
        feat = seq[:, -1, :]
        for layer in self.dense_layers:
            feat = dense_forward(layer, feat)
        logits = dense_forward(self.out_layer, feat)
        return (logits, hidden) if return_hidden else logits

    __call__ = forward


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> AcousticModel:
    """Instantiate parameters for a spec; deterministic per (spec, seed, dtype)."""
    model = AcousticModel(spec, dtype=dtype)
    rng = np.random.default_rng([seed, 0xAC0])
    init = make_initializer(spec.init)
    use_bias = not spec.constrained
    act = spec.activation

    def zeros(shape):
        return np.zeros(shape, dtype=model.dtype)

    if spec.variant == "sinc_hsrnn":
        sc = spec.sinc
        bank = mel_init(sc.n_channels, sc.kernel_size, sc.sample_rate, f_min=sc.f_min)
        f_low = model._register("sinc.f_low", bank.f_low.data, "sinc_freq")
        band_width = model._register("sinc.band_width", bank.band_width.data, "sinc_freq")
        model.sinc_bank = SincFilterBank(sc.n_channels, sc.kernel_size, sc.sample_rate, f_low, band_width)

    if spec.variant == "rnn":
        h = spec.hidden_sizes[0]
        d = spec.input_dim
        w_in = model._register("rnn.w_in", init((h, d), rng), "weight")
        w_rec = model._register("rnn.w_rec", init((h, h), rng), "weight")
        bias = model._register("rnn.bias", zeros(h), "bias") if use_bias else None
        h0 = model._register("rnn.h0", init((h,), rng), "buffer")
        model.rnn_cell = RnnCell(w_in, w_rec, bias, act, h0.data)
        feat_dim = h
    else:
        in_dim = spec.sinc.n_channels if spec.variant == "sinc_hsrnn" else spec.input_dim
        k = spec.subsample_factor
        for i, h in enumerate(spec.hidden_sizes):
            w_pos = model._register(f"hs{i}.w_pos", init((k, h, in_dim), rng), "weight")
            w_rec = model._register(f"hs{i}.w_rec", init((h, h), rng), "weight")
            bias = model._register(f"hs{i}.bias", zeros(h), "bias") if use_bias else None
            model.hs_layers.append(HsLayer(w_pos, w_rec, bias, act))
            in_dim = h
        feat_dim = in_dim

    # Dense head: tanh in unconstrained models, the constrained activation
    # otherwise; the final classifier layer is always linear.
    head_act = ActivationSpec("tanh") if not spec.constrained else act
    for j, d_out in enumerate(spec.dense_sizes):
        w = model._register(f"dense{j}.w", init((d_out, feat_dim), rng), "weight")
        bias = model._register(f"dense{j}.bias", zeros(d_out), "bias") if use_bias else None
        model.dense_layers.append(DenseLayer(w, bias, head_act))
        feat_dim = d_out
    w = model._register("out.w", init((spec.n_classes, feat_dim), rng), "weight")
    bias = model._register("out.bias", zeros(spec.n_classes), "bias") if use_bias else None
    model.out_layer = DenseLayer(w, bias, None)
    return model


def model_forward(model: AcousticModel, intensity, return_hidden: bool = False):
    """Module-level alias for :meth:`AcousticModel.forward`."""
    return model.forward(intensity, return_hidden=return_hidden)
