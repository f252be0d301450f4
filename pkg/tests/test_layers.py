"""Layer forwards vs naive reference loops; model composition and shapes."""

import math

import numpy as np
import pytest

from acoustinet.constraints import ActivationSpec, InitSpec
from acoustinet.layers import (AcousticModel, DenseLayer, EmptySequenceError, HsLayer,
                               ModelSpec, RnnCell, SincConfig, StructuralError, build_model,
                               hs_layer_forward, model_forward, rnn_forward)
from acoustinet.tensor import Tensor, no_grad


def _act(kind="offset_abs", c=0.1):
    return ActivationSpec(kind, c)


def _apply_act(kind, c, x):
    if kind == "offset_abs":
        return np.abs(x - c)
    if kind == "offset_relu":
        return np.maximum(x - c, 0.0)
    return np.tanh(x)


def naive_rnn(w_in, w_rec, x, h0, kind, c, bias=None):
    """Reference recurrence, one timestep at a time."""
    h = h0.copy()
    out = []
    for t in range(x.shape[0]):
        pre = w_in @ x[t] + w_rec @ h
        if bias is not None:
            pre = pre + bias
        h = _apply_act(kind, c, pre)
        out.append(h)
    return np.stack(out)


def naive_hs(w_pos, w_rec, x, h0, kind, c, bias=None):
    """Reference hierarchical subsampling: explicit double loop plus padding."""
    k, h_out, _ = w_pos.shape
    t_len = x.shape[0]
    n_seg = math.ceil(t_len / k)
    padded = np.zeros((n_seg * k, x.shape[1]))
    padded[:t_len] = x
    h = h0.copy()
    out = []
    for s in range(n_seg):
        pre = w_rec @ h
        for j in range(k):
            pre = pre + w_pos[j] @ padded[s * k + j]
        if bias is not None:
            pre = pre + bias
        h = _apply_act(kind, c, pre)
        out.append(h)
    return np.stack(out)


class TestRnnForward:
    def test_zero_weights_hit_the_offset(self):
        cell = RnnCell(Tensor(np.zeros((3, 1))), Tensor(np.zeros((3, 3))), None,
                       _act("offset_abs", 0.1), np.zeros(3))
        out = rnn_forward(cell, np.random.default_rng(0).uniform(size=(5, 1)))
        np.testing.assert_allclose(out.data, 0.1, atol=1e-15)

    def test_matches_hand_unrolled_reference(self):
        rng = np.random.default_rng(1)
        w_in, w_rec = rng.normal(size=(2, 1)), rng.normal(size=(2, 2))
        h0 = rng.uniform(size=2)
        x = rng.normal(size=(3, 1))
        cell = RnnCell(Tensor(w_in), Tensor(w_rec), None, _act("offset_abs", 0.1), h0)
        got = rnn_forward(cell, x).data
        expect = naive_rnn(w_in, w_rec, x, h0, "offset_abs", 0.1)
        np.testing.assert_allclose(got, expect, atol=1e-12)

    def test_bias_path_matches_reference(self):
        rng = np.random.default_rng(2)
        w_in, w_rec, bias = rng.normal(size=(4, 2)), rng.normal(size=(4, 4)), rng.normal(size=4)
        x = rng.normal(size=(6, 2))
        cell = RnnCell(Tensor(w_in), Tensor(w_rec), Tensor(bias), _act("tanh"), np.zeros(4))
        got = rnn_forward(cell, x).data
        expect = naive_rnn(w_in, w_rec, x, np.zeros(4), "tanh", 0.0, bias)
        np.testing.assert_allclose(got, expect, atol=1e-12)

    def test_constrained_outputs_non_negative(self):
        rng = np.random.default_rng(3)
        cell = RnnCell(Tensor(rng.uniform(0, 1, (8, 1))), Tensor(rng.uniform(0, 1, (8, 8))),
                       None, _act("offset_relu", 0.05), rng.uniform(0, 0.05, 8))
        out = rnn_forward(cell, rng.uniform(0, 1, size=(50, 1)))
        assert out.data.min() >= 0.0

    def test_empty_sequence_rejected(self):
        cell = RnnCell(Tensor(np.zeros((2, 1))), Tensor(np.zeros((2, 2))), None,
                       _act(), np.zeros(2))
        with pytest.raises(EmptySequenceError):
            rnn_forward(cell, np.zeros((0, 1)))

    def test_batched_equals_stacked_single(self):
        rng = np.random.default_rng(4)
        cell = RnnCell(Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 3))),
                       None, _act("offset_abs", 0.2), rng.uniform(size=3))
        xs = rng.normal(size=(4, 7, 2))
        batched = rnn_forward(cell, xs).data
        for b in range(4):
            single = rnn_forward(cell, xs[b]).data
            np.testing.assert_allclose(batched[b], single, atol=1e-12)


class TestHsLayerForward:
    def test_padding_gives_ceil_segments(self):
        rng = np.random.default_rng(5)
        layer = HsLayer(Tensor(rng.normal(size=(8, 3, 2))), Tensor(rng.normal(size=(3, 3))),
                        None, _act())
        out = hs_layer_forward(layer, rng.normal(size=(100, 2)))
        assert out.shape == (13, 3)

    def test_factor_one_reduces_to_rnn(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(4, 2))
        w_rec = rng.normal(size=(4, 4))
        x = rng.normal(size=(9, 2))
        layer = HsLayer(Tensor(w[None]), Tensor(w_rec), None, _act("offset_abs", 0.3))
        cell = RnnCell(Tensor(w), Tensor(w_rec), None, _act("offset_abs", 0.3), np.zeros(4))
        np.testing.assert_array_equal(hs_layer_forward(layer, x).data,
                                      rnn_forward(cell, x, h0=np.zeros(4)).data)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            k = int(rng.choice([1, 2, 4, 8]))
            t_len = int(rng.integers(1, 65))
            d_in = int(rng.integers(1, 4))
            d_out = int(rng.integers(1, 5))
            kind = "offset_abs" if trial % 2 == 0 else "offset_relu"
            c = float(rng.uniform(0.0, 0.5))
            w_pos = rng.normal(size=(k, d_out, d_in))
            w_rec = rng.normal(size=(d_out, d_out))
            x = rng.normal(size=(t_len, d_in))
            layer = HsLayer(Tensor(w_pos), Tensor(w_rec), None, _act(kind, c))
            got = hs_layer_forward(layer, x).data
            expect = naive_hs(w_pos, w_rec, x, np.zeros(d_out), kind, c)
            np.testing.assert_allclose(got, expect, atol=1e-12)

    def test_stacked_lengths_shrink_by_ceil(self):
        rng = np.random.default_rng(8)
        sizes = [3, 5, 2]
        layers = []
        d_in = 1
        for h in sizes:
            layers.append(HsLayer(Tensor(rng.normal(size=(4, h, d_in))),
                                  Tensor(rng.normal(size=(h, h))), None, _act()))
            d_in = h
        seq = Tensor(rng.normal(size=(1, 101, 1)))
        expected_len = 101
        for layer in layers:
            seq = hs_layer_forward(layer, seq)
            expected_len = math.ceil(expected_len / 4)
            assert seq.shape[1] == expected_len


class TestModelSpecValidation:
    def test_variant_names(self):
        with pytest.raises(ValueError, match="variant"):
            ModelSpec(variant="lstm", hidden_sizes=(8,), n_classes=2)

    def test_hs_needs_three_layers(self):
        with pytest.raises(ValueError, match="at least 3"):
            ModelSpec(variant="hsrnn", hidden_sizes=(8, 16), n_classes=2, dense_sizes=(8,))

    def test_dense_head_arity(self):
        with pytest.raises(ValueError, match="dense"):
            ModelSpec(variant="hsrnn", hidden_sizes=(4, 8, 16), n_classes=2, dense_sizes=())
        with pytest.raises(ValueError, match="dense"):
            ModelSpec(variant="sinc_hsrnn", hidden_sizes=(4, 8, 16), n_classes=2,
                      dense_sizes=(8,), sinc=SincConfig(sample_rate=2000.0))

    def test_constrained_requires_non_negative_activation(self):
        with pytest.raises(ValueError, match="non-negative"):
            ModelSpec(variant="rnn", hidden_sizes=(8,), n_classes=2,
                      activation=ActivationSpec("tanh"))

    def test_sinc_requires_config(self):
        with pytest.raises(ValueError, match="sinc"):
            ModelSpec(variant="sinc_hsrnn", hidden_sizes=(4, 8, 16), n_classes=2,
                      dense_sizes=(8, 4), activation=ActivationSpec("offset_abs", 0.95))


def _small_sinc_spec(n_classes=2, rate=2000.0):
    return ModelSpec(variant="sinc_hsrnn", hidden_sizes=(4, 8, 16), n_classes=n_classes,
                     constrained=True, activation=ActivationSpec("offset_abs", 0.95),
                     init=InitSpec("abs_xavier_uniform", 0.13), dense_sizes=(8, 4),
                     subsample_factor=8, sinc=SincConfig(sample_rate=rate))


class TestModelForward:
    def test_rnn_output_shape(self):
        spec = ModelSpec(variant="rnn", hidden_sizes=(8,), n_classes=2,
                         activation=ActivationSpec("offset_abs", 0.05),
                         init=InitSpec("uniform_nonneg", 0.05))
        model = build_model(spec, seed=0)
        logits = model.forward(np.random.default_rng(0).uniform(size=1000).astype(np.float32))
        assert logits.shape == (1, 2)

    def test_all_zero_input_is_finite_and_deterministic(self):
        spec = ModelSpec(variant="hsrnn", hidden_sizes=(4, 8, 16), n_classes=10,
                         activation=ActivationSpec("offset_abs", 0.1),
                         init=InitSpec("uniform_nonneg", 0.05), dense_sizes=(8,))
        model = build_model(spec, seed=1)
        x = np.zeros((2, 500), dtype=np.float32)
        a = model.forward(x).data
        b = model.forward(x).data
        assert np.isfinite(a).all()
        assert np.array_equal(a, b)

    def test_sinc_stack_sees_documented_lengths(self):
        # 8 kHz, 1 s, kernel 101: conv gives 7900, then ceil-div by 8 per layer.
        spec = ModelSpec(variant="sinc_hsrnn", hidden_sizes=(8, 16, 32, 64), n_classes=10,
                         constrained=True, activation=ActivationSpec("offset_abs", 0.95),
                         init=InitSpec("abs_xavier_uniform", 0.13), dense_sizes=(8, 4),
                         subsample_factor=8, sinc=SincConfig(sample_rate=8000.0))
        model = build_model(spec, seed=0)
        x = np.random.default_rng(2).uniform(0, 1, size=(1, 8000)).astype(np.float32)
        with no_grad():
            logits, hidden = model.forward(x, return_hidden=True)
        assert [h.shape[1] for h in hidden] == [988, 124, 16, 2]
        assert logits.shape == (1, 10)

    def test_constrained_hidden_states_non_negative(self):
        model = build_model(_small_sinc_spec(), seed=3)
        x = np.random.default_rng(3).uniform(0, 1, size=(2, 600)).astype(np.float32)
        with no_grad():
            _, hidden = model.forward(x, return_hidden=True)
        for h in hidden:
            assert h.data.min() >= 0.0

    def test_unconstrained_model_has_biases(self):
        spec = ModelSpec(variant="rnn", hidden_sizes=(8,), n_classes=2, constrained=False,
                         activation=ActivationSpec("tanh"), init=InitSpec("xavier_uniform", 1.0))
        model = build_model(spec, seed=0)
        names = [n for n, _ in model.named_parameters()]
        assert "rnn.bias" in names and "out.bias" in names

    def test_constrained_model_is_bias_free(self):
        model = build_model(_small_sinc_spec(), seed=0)
        assert not any(n.endswith(".bias") for n, _ in model.named_parameters())

    def test_input_feature_mismatch_is_structural_error(self):
        spec = ModelSpec(variant="rnn", hidden_sizes=(4,), n_classes=2,
                         activation=ActivationSpec("offset_abs", 0.05),
                         init=InitSpec("uniform_nonneg", 0.05), input_dim=1)
        model = build_model(spec, seed=0)
        with pytest.raises(StructuralError, match="input_dim"):
            model.forward(np.zeros((1, 50, 3), dtype=np.float32))

    def test_model_forward_alias(self):
        spec = ModelSpec(variant="rnn", hidden_sizes=(4,), n_classes=2,
                         activation=ActivationSpec("offset_abs", 0.05),
                         init=InitSpec("uniform_nonneg", 0.05))
        model = build_model(spec, seed=5)
        x = np.random.default_rng(5).uniform(size=(1, 100)).astype(np.float32)
        np.testing.assert_array_equal(model_forward(model, x).data, model.forward(x).data)

    def test_build_is_deterministic_per_seed(self):
        a = build_model(_small_sinc_spec(), seed=11)
        b = build_model(_small_sinc_spec(), seed=11)
        for (n1, t1), (n2, t2) in zip(a.named_parameters(), b.named_parameters()):
            assert n1 == n2
            assert np.array_equal(t1.data, t2.data)

    def test_float32_forward_stays_float32(self):
        model = build_model(_small_sinc_spec(), seed=0, dtype=np.float32)
        x = np.random.default_rng(1).uniform(size=(1, 300)).astype(np.float32)
        assert model.forward(x).dtype == np.float32
