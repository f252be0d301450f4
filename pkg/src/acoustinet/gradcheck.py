"""Central finite-difference verification of recorded gradients.

The checker perturbs each parameter coordinate in place, re-evaluates the
loss, and compares the central difference against the gradient produced by
``backward()``. Coordinates sitting within a step of a subgradient kink
(offset activations, clamps) make the central difference meaningless; those
are detected by a half-step consistency probe and skipped rather than
reported as failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad, softmax_cross_entropy

__all__ = ["GradCheckReport", "finite_difference_check", "model_gradient_check",
           "preset_gradient_check"]


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict = field(default_factory=dict)  # name -> max rel err over kept coords
    n_checked: int = 0
    n_skipped_kinks: int = 0

    def __str__(self):
        lines = [f"max relative error: {self.max_rel_err:.3e} "
                 f"({self.n_checked} coordinates, {self.n_skipped_kinks} near kinks skipped)"]
        for name, err in self.per_param.items():
            lines.append(f"  {name:<28s} {err:.3e}")
        return "\n".join(lines)


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def finite_difference_check(f, params, eps: float = 1e-6,
                            recheck_above: float = 1e-6,
                            kink_rtol: float = 0.1) -> GradCheckReport:
    """Compare recorded gradients of ``f()`` against central differences.

    ``f`` evaluates the scalar loss from the current contents of ``params``
    (a name -> Tensor mapping or an iterable of (name, Tensor) pairs) and must
    be deterministic. The step per coordinate is ``eps * max(1, |p|)`` so that
    large-magnitude parameters (e.g. cutoff frequencies in Hz) are probed at a
    sensible relative scale.

    Coordinates whose error exceeds ``recheck_above`` are re-probed at half
    step; if the two difference quotients disagree by more than ``kink_rtol``
    the loss is not locally linearizable there (a kink within the probe
    interval) and the coordinate is skipped.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if isinstance(params, dict):
        named = list(params.items())
    else:
        named = [p if isinstance(p, tuple) else (f"param{i}", p) for i, p in enumerate(params)]
    for name, t in named:
        if not isinstance(t, Tensor) or not t.requires_grad:
            raise ValueError(f"parameter {name!r} is not a Tensor with requires_grad")

    for _, t in named:
        t.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise ValueError("loss is not finite at the probe point")
    loss.backward()
    recorded = {name: np.array(t.grad, copy=True) for name, t in named}

    def eval_at() -> float:
        with no_grad():
            out = f()
        val = float(out.data)
        if not np.isfinite(val):
            raise ValueError("loss became non-finite during finite-difference probing")
        return val

    report = GradCheckReport(max_rel_err=0.0)
    for name, t in named:
        flat = t.data.reshape(-1)
        g_ad = recorded[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            step = eps * max(1.0, abs(float(orig)))

            def central(h: float) -> float:
                flat[i] = orig + h
                f_plus = eval_at()
                flat[i] = orig - h
                f_minus = eval_at()
                flat[i] = orig
                return (f_plus - f_minus) / (2.0 * h)

            fd = central(step)
            err = _rel_err(float(g_ad[i]), fd)
            if err > recheck_above:
                fd_half = central(step / 2.0)
                if _rel_err(fd, fd_half) > kink_rtol:
                    report.n_skipped_kinks += 1
                    continue
                err = min(err, _rel_err(float(g_ad[i]), fd_half))
            worst = max(worst, err)
            report.n_checked += 1
        report.per_param[name] = worst
        report.max_rel_err = max(report.max_rel_err, worst)
    return report


def model_gradient_check(model, signal, labels, eps: float = 1e-6) -> GradCheckReport:
    """Check every trainable parameter of a model through a cross-entropy loss."""
    params = dict(model.named_parameters())

    def f():
        return softmax_cross_entropy(model.forward(signal), labels)

    return finite_difference_check(f, params, eps=eps)


def preset_gradient_check(name: str, duration: float = 0.1, seed: int = 0,
                          eps: float = 1e-5) -> GradCheckReport:
    """Build a small float64 model preset and verify all its gradients.

    The probe point is nudged off initialization symmetry: the sinc band
    widths shrink slightly so no upper cutoff sits exactly on the Nyquist
    clamp, and weights get a few percent of multiplicative jitter. The
    default step is larger than the single-op default because the loss of a
    deep unrolled graph carries more accumulated roundoff, which dominates
    the central-difference error at small steps.
    """
    from .layers import build_model
    from .presets import GRADCHECK_PRESETS

    if name not in GRADCHECK_PRESETS:
        raise KeyError(f"unknown gradcheck preset {name!r}; available: {sorted(GRADCHECK_PRESETS)}")
    spec, rate = GRADCHECK_PRESETS[name]()
    model = build_model(spec, seed=seed, dtype=np.float64)
    rng = np.random.default_rng([seed, 0x6C])
    for pname, t in model.named_parameters():
        if pname == "sinc.band_width":
            t.data *= 0.9
        else:
            t.data *= 1.0 + rng.uniform(-0.05, 0.05, t.shape)
    n_samples = int(round(duration * rate))
    x = rng.uniform(0.0, 1.0, size=(2, n_samples))
    labels = rng.integers(0, spec.n_classes, size=2)
    return model_gradient_check(model, x, labels, eps=eps)
