"""Scikit-learn style front door for the constrained acoustic classifiers.

``AcousticNetClassifier`` wraps spec construction, intensity preprocessing,
and the projected-Adam training loop behind the familiar fit/predict API so
the models compose with pipelines, grid search, and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .constraints import ActivationSpec, InitSpec
from .data import AudioRecord, DatasetSplit
from .layers import ModelSpec, SincConfig
from .tensor import no_grad, softmax
from .training import TrainConfig, train

__all__ = ["AcousticNetClassifier"]

_DEFAULT_DENSE = {"rnn": (), "hsrnn": (16,), "sinc_hsrnn": (32, 16)}


class AcousticNetClassifier(ClassifierMixin, BaseEstimator):
    """Constrained recurrent audio classifier with an estimator interface.

    Rows of ``X`` are equal-length waveform clips sampled at ``sample_rate``;
    with ``square_input=True`` (the default) each row is peak-normalized and
    squared into the non-negative intensity representation the models expect.
    Set it to False when rows are already intensities.

    Parameters mirror the architecture/training config: ``variant`` selects
    the plain recurrent model, the hierarchical-subsampling stack, or the
    sinc-filter front end plus stack; ``constrained=True`` trains bias-free
    with non-negative activations and weights projected into [0,1] after
    every optimizer step.
    """

    def __init__(self, variant="sinc_hsrnn", hidden_sizes=(4, 8, 16), dense_sizes=None,
                 constrained=True, activation="offset_abs", activation_offset=0.95,
                 init="abs_xavier_uniform", init_scale=0.13, subsample_factor=8,
                 sinc_channels=5, sinc_kernel_size=101, sinc_f_min=30.0,
                 sample_rate=2000.0, epochs=15, batch_size=32, lr=1e-3,
                 fine_tune_epochs=0, fine_tune_lr=1e-4, max_grad_norm=1.0,
                 square_input=True, random_state=0):
        self.variant = variant
        self.hidden_sizes = hidden_sizes
        self.dense_sizes = dense_sizes
        self.constrained = constrained
        self.activation = activation
        self.activation_offset = activation_offset
        self.init = init
        self.init_scale = init_scale
        self.subsample_factor = subsample_factor
        self.sinc_channels = sinc_channels
        self.sinc_kernel_size = sinc_kernel_size
        self.sinc_f_min = sinc_f_min
        self.sample_rate = sample_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.fine_tune_epochs = fine_tune_epochs
        self.fine_tune_lr = fine_tune_lr
        self.max_grad_norm = max_grad_norm
        self.square_input = square_input
        self.random_state = random_state

    # -- plumbing -------------------------------------------------------------

    def _build_spec(self, n_classes: int) -> ModelSpec:
        dense = self.dense_sizes
        if dense is None:
            dense = _DEFAULT_DENSE[self.variant] if self.variant in _DEFAULT_DENSE else ()
        sinc = None
        if self.variant == "sinc_hsrnn":
            sinc = SincConfig(n_channels=self.sinc_channels, kernel_size=self.sinc_kernel_size,
                              sample_rate=float(self.sample_rate), f_min=self.sinc_f_min)
        return ModelSpec(
            variant=self.variant,
            hidden_sizes=tuple(self.hidden_sizes),
            n_classes=n_classes,
            constrained=self.constrained,
            activation=ActivationSpec(self.activation, self.activation_offset),
            init=InitSpec(self.init, self.init_scale),
            dense_sizes=tuple(dense),
            subsample_factor=self.subsample_factor,
            sinc=sinc,
        )

    def _to_intensity(self, X: np.ndarray) -> np.ndarray:
        if not self.square_input:
            if X.min() < 0:
                raise ValueError("square_input=False expects non-negative intensity rows")
            return X
        peaks = np.abs(X).max(axis=1, keepdims=True)
        peaks[peaks < 1e-9] = 1.0  # silent rows stay all-zero
        z = X / peaks
        return z * z

    def _check_waveforms(self, X: np.ndarray) -> np.ndarray:
        if self.variant == "sinc_hsrnn" and X.shape[1] < self.sinc_kernel_size:
            raise ValueError(
                f"clips of {X.shape[1]} samples are shorter than the sinc kernel ({self.sinc_kernel_size})")
        return X

    # -- estimator API -----------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self._check_waveforms(X)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]

        intensity = self._to_intensity(X)
        records = [AudioRecord(intensity[i].astype(np.float32), int(y_idx[i]),
                               speaker_id=i, sample_rate=int(self.sample_rate))
                   for i in range(len(X))]
        cfg = TrainConfig(
            model=self._build_spec(len(self.classes_)),
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            fine_tune_epochs=self.fine_tune_epochs, fine_tune_lr=self.fine_tune_lr,
            max_grad_norm=self.max_grad_norm, seed=self.random_state,
            target_rate=int(self.sample_rate), dataset="synthetic",
        )
        result = train(cfg, DatasetSplit(train=records, test=[]))
        self.model_ = result.model
        self.history_ = result
        return self

    def _logits(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("this classifier is not fitted yet; call fit first")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        intensity = self._to_intensity(X)
        out = []
        with no_grad():
            for start in range(0, len(X), 256):
                out.append(self.model_.forward(intensity[start:start + 256]).data)
        return np.concatenate(out, axis=0)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self._logits(X).astype(np.float64))

    def predict(self, X) -> np.ndarray:
        return self.classes_[self._logits(X).argmax(axis=1)]
