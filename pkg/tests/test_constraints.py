"""Offset activations, the [0,1] projection, and initializers."""

import numpy as np
import pytest

from acoustinet import tensor as T
from acoustinet.constraints import (ActivationSpec, InitSpec, init_abs_xavier,
                                    init_uniform_nonneg, init_xavier_uniform, offset_abs,
                                    offset_relu, project_unit_interval)
from acoustinet.gradcheck import finite_difference_check
from acoustinet.tensor import Tensor


class TestOffsetRelu:
    def test_zero_at_threshold(self):
        out = offset_relu(Tensor([0.1]), 0.1)
        np.testing.assert_array_equal(out.data, [0.0])

    def test_hand_computed(self):
        out = offset_relu(Tensor([0.0, 0.05, 0.2]), 0.1)
        np.testing.assert_allclose(out.data, [0.0, 0.0, 0.1], atol=1e-15)

    def test_gradient_away_from_threshold(self):
        x = Tensor([0.5, -0.3, 0.9], requires_grad=True)
        report = finite_difference_check(
            lambda: T.sum_all(offset_relu(x, 0.1)), {"x": x}, eps=1e-6)
        assert report.max_rel_err < 1e-6


class TestOffsetAbs:
    def test_zero_at_threshold(self):
        out = offset_abs(Tensor([0.95]), 0.95)
        np.testing.assert_array_equal(out.data, [0.0])

    def test_hand_computed(self):
        out = offset_abs(Tensor([0.0, 0.95, 1.0]), 0.95)
        np.testing.assert_allclose(out.data, [0.95, 0.0, 0.05], atol=1e-15)

    def test_gradient_away_from_kink(self):
        x = Tensor([0.2, 1.4, -0.7], requires_grad=True)
        report = finite_difference_check(
            lambda: T.sum_all(offset_abs(x, 0.95)), {"x": x}, eps=1e-6)
        assert report.max_rel_err < 1e-6


def test_offset_variants_agree_above_threshold():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = float(rng.uniform(0.0, 1.0))
        x = Tensor(c + np.abs(rng.normal(size=50)))
        np.testing.assert_allclose(offset_relu(x, c).data, offset_abs(x, c).data, atol=1e-14)


def test_both_activations_are_non_negative_everywhere():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = Tensor(rng.normal(scale=5.0, size=100))
        c = float(rng.uniform(0.0, 1.0))
        assert offset_relu(x, c).data.min() >= 0.0
        assert offset_abs(x, c).data.min() >= 0.0


class TestProjection:
    def test_clamps_out_of_range(self):
        t = Tensor(np.array([-0.2, 0.5, 1.5]), requires_grad=True)
        project_unit_interval([t])
        np.testing.assert_array_equal(t.data, [0.0, 0.5, 1.0])

    def test_in_range_is_bitwise_untouched(self):
        rng = np.random.default_rng(2)
        vals = rng.uniform(0.0, 1.0, size=64)
        t = Tensor(vals.copy(), requires_grad=True)
        project_unit_interval([t])
        assert np.array_equal(t.data, vals)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        t = Tensor(rng.normal(scale=2.0, size=64), requires_grad=True)
        project_unit_interval([t])
        once = t.data.copy()
        project_unit_interval([t])
        assert np.array_equal(t.data, once)


class TestInitializers:
    def test_uniform_nonneg_statistics(self):
        rng = np.random.default_rng(4)
        samples = init_uniform_nonneg((100_000,), 0.06, rng)
        assert samples.min() >= 0.0
        assert samples.max() < 0.06
        assert abs(samples.mean() - 0.03) < 0.001

    def test_deterministic_per_seed(self):
        a = init_uniform_nonneg((32, 32), 0.1, np.random.default_rng(42))
        b = init_uniform_nonneg((32, 32), 0.1, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_disjoint_upper_tails(self):
        rng = np.random.default_rng(5)
        small = init_uniform_nonneg((1000,), 0.01, rng)
        large = init_uniform_nonneg((1000,), 0.3, rng)
        assert small.max() < 0.01 < large.max()

    def test_nonpositive_bound_rejected(self):
        with pytest.raises(ValueError):
            init_uniform_nonneg((3,), 0.0, np.random.default_rng(0))

    def test_xavier_unit_bound(self):
        # fan_in = fan_out = 3, gain 1 -> bound sqrt(6/6) = 1
        rng = np.random.default_rng(6)
        samples = init_xavier_uniform((3, 3), 1.0, rng)
        assert np.abs(samples).max() < 1.0
        wide = init_xavier_uniform((3, 3), 1.0, np.random.default_rng(7))
        assert np.abs(np.concatenate([samples, wide]).ravel()).max() > 0.8

    def test_abs_xavier_non_negative(self):
        samples = init_abs_xavier((16, 16), 0.5, np.random.default_rng(8))
        assert samples.min() >= 0.0

    def test_gain_013_bound(self):
        # fan 32 -> 64: bound = 0.13 * sqrt(6 / 96) = 0.0325
        bound = 0.13 * np.sqrt(6.0 / 96.0)
        samples = init_abs_xavier((64, 32), 0.13, np.random.default_rng(9))
        assert samples.max() < bound
        np.testing.assert_allclose(bound, 0.0325, atol=1e-12)

    def test_zero_fan_rejected(self):
        with pytest.raises(ValueError, match="fan"):
            init_xavier_uniform((0, 4), 1.0, np.random.default_rng(0))

    def test_initializers_pure_in_seed_and_shape(self):
        for kind, scale in [("uniform_nonneg", 0.05), ("xavier_uniform", 1.0),
                            ("abs_xavier_uniform", 0.13)]:
            from acoustinet.constraints import make_initializer
            init = make_initializer(InitSpec(kind, scale))
            a = init((4, 5), np.random.default_rng(11))
            b = init((4, 5), np.random.default_rng(11))
            assert np.array_equal(a, b)


class TestSpecs:
    def test_unknown_activation_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            ActivationSpec("sigmoid", 0.1)

    def test_negative_offset_rejected(self):
        with pytest.raises(ValueError, match="offset"):
            ActivationSpec("offset_abs", -0.1)

    def test_unknown_init_kind(self):
        with pytest.raises(ValueError, match="unknown initializer"):
            InitSpec("kaiming", 1.0)

    def test_tanh_is_signed(self):
        spec = ActivationSpec("tanh")
        assert not spec.non_negative
        assert ActivationSpec("offset_relu", 0.1).non_negative
