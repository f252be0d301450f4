"""The finite-difference checker itself: exactness, kink handling, errors."""

import numpy as np
import pytest

from acoustinet import tensor as T
from acoustinet.gradcheck import finite_difference_check
from acoustinet.tensor import Tensor


def test_quadratic_is_near_exact():
    x = Tensor([3.0], requires_grad=True)
    report = finite_difference_check(lambda: T.sum_all(T.mul_elem(x, x)), {"x": x})
    assert report.max_rel_err < 1e-9


def test_kink_adjacent_coordinate_is_skipped():
    # |x - c| probed within eps of the kink: the central difference is
    # meaningless there and the checker must skip, not fail.
    c = 0.5
    eps = 1e-6
    x = Tensor([c + eps / 3.0], requires_grad=True)

    def loss():
        return T.sum_all(T.abs_elem(T.add(x, Tensor([-c]))))

    report = finite_difference_check(loss, {"x": x}, eps=eps)
    assert report.n_skipped_kinks == 1
    assert report.n_checked == 0


def test_exactly_at_kink_agrees_with_subgradient_zero():
    # At x == c both the convention (0) and the symmetric difference (0) agree.
    x = Tensor([0.5], requires_grad=True)

    def loss():
        return T.sum_all(T.abs_elem(T.add(x, Tensor([-0.5]))))

    report = finite_difference_check(loss, {"x": x})
    assert report.max_rel_err < 1e-9


def test_away_from_kink_abs_checks_clean():
    x = Tensor([2.0, -1.5], requires_grad=True)
    report = finite_difference_check(lambda: T.sum_all(T.abs_elem(x)), {"x": x})
    assert report.max_rel_err < 1e-9
    assert report.n_skipped_kinks == 0


def test_nonpositive_eps_rejected():
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError, match="eps"):
        finite_difference_check(lambda: T.sum_all(x), {"x": x}, eps=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_rejected():
    x = Tensor([0.0], requires_grad=True)

    def loss():
        return T.scale(T.sum_all(x), np.inf)

    with pytest.raises(ValueError, match="finite"):
        finite_difference_check(loss, {"x": x})


def test_requires_grad_enforced():
    x = Tensor([1.0])
    with pytest.raises(ValueError, match="requires_grad"):
        finite_difference_check(lambda: T.sum_all(x), {"x": x})


def test_wrong_gradient_is_caught():
    # A deliberately corrupted backward rule must be reported, not skipped.
    x = Tensor([1.3], requires_grad=True)

    def bad_square(t):
        return T.make_op(t.data ** 2, (t,), lambda g: t._accum(g * 3.0 * t.data))

    report = finite_difference_check(lambda: T.sum_all(bad_square(x)), {"x": x})
    assert report.max_rel_err > 0.1
