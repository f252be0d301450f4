"""Training loop, evaluation, multi-seed statistics, init sweep, sparsity report."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .constraints import InitSpec
from .data import (AudioRecord, DatasetSplit, binary_subset, default_tone_classes,
                   load_records, speaker_disjoint_split, synth_dataset)
from .layers import AcousticModel, ModelSpec, build_model
from .optim import AdamState, TrainingDivergedError, constrained_step, lr_schedule
from .tensor import no_grad, softmax, softmax_cross_entropy

__all__ = [
    "TrainConfig",
    "RunResult",
    "EvalResult",
    "MultiSeedResult",
    "SweepPoint",
    "SparsityReport",
    "train",
    "evaluate",
    "multi_seed",
    "init_sweep",
    "sparsity_report",
    "build_split",
    "write_metrics_csv",
    "write_confusion_csv",
    "write_sweep_csv",
]

logger = logging.getLogger(__name__)

DATASETS = ("audiomnist-binary", "audiomnist-full", "synthetic")


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    fine_tune_epochs: int = 0
    fine_tune_lr: float = 1e-4
    max_grad_norm: float = 1.0
    seed: int = 0
    target_rate: int = 8000
    dataset: str = "synthetic"
    n_runs: int = 1
    dtype: str = "float32"
    debug_checks: bool = False
    data_seed: int = 1234
    synth_train_per_class: int = 100
    synth_test_per_class: int = 50
    synth_classes: tuple = ()

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.fine_tune_epochs < 0 or self.fine_tune_epochs > self.epochs:
            raise ValueError("fine_tune_epochs must lie in [0, epochs]")
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; choose from {DATASETS}")


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # [n_classes, n_classes], rows = true class
    loss: float


@dataclass
class RunResult:
    seed: int
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    confusion: Optional[np.ndarray] = None
    wall_time: float = 0.0
    sparsity: float = 0.0
    model: Optional[AcousticModel] = None  # the trained model, for checkpointing

    @property
    def final_test_accuracy(self) -> float:
        return self.test_acc[-1] if self.test_acc else float("nan")

    @property
    def final_train_accuracy(self) -> float:
        return self.train_acc[-1] if self.train_acc else float("nan")


@dataclass
class MultiSeedResult:
    mean_accuracy: float
    std_accuracy: float
    results: list
    diverged_seeds: list

    @property
    def completed(self) -> int:
        return len(self.results)


@dataclass
class SweepPoint:
    c: float
    mean_accuracy: float
    std_accuracy: float
    per_run: list


@dataclass
class SparsityReport:
    zero_fraction: float
    histogram: np.ndarray  # 50 bins over [0, 1]
    bin_edges: np.ndarray
    n_weights: int


def _stack_records(records: Sequence[AudioRecord], dtype) -> tuple:
    x = np.stack([r.intensity for r in records]).astype(dtype, copy=False)
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def _eval_arrays(model: AcousticModel, x: np.ndarray, y: np.ndarray,
                 n_classes: int, batch_size: int = 256) -> EvalResult:
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    total_nll = 0.0
    correct = 0
    with no_grad():
        for start in range(0, len(x), batch_size):
            xb, yb = x[start:start + batch_size], y[start:start + batch_size]
            logits = model.forward(xb).data
            # argmax breaks ties toward the lowest class index
            pred = logits.argmax(axis=1)
            correct += int((pred == yb).sum())
            np.add.at(confusion, (yb, pred), 1)
            z = logits.astype(np.float64)
            z -= z.max(axis=1, keepdims=True)
            total_nll -= float((z[np.arange(len(yb)), yb]
                                - np.log(np.exp(z).sum(axis=1))).sum())
    return EvalResult(correct / len(x), confusion, total_nll / len(x))


def evaluate(model: AcousticModel, records: Sequence[AudioRecord]) -> EvalResult:
    """Accuracy, confusion matrix (rows = true class), and mean test loss.

    Side-effect free: repeated calls return identical results.
    """
    if not records:
        raise ValueError("cannot evaluate on an empty record list")
    x, y = _stack_records(records, model.dtype)
    return _eval_arrays(model, x, y, model.spec.n_classes)


def train(config: TrainConfig, split: DatasetSplit, model: Optional[AcousticModel] = None) -> RunResult:
    """Train one model on the split; deterministic per (config, seed).

    Mini-batches are reshuffled each epoch from a seeded generator. A
    non-finite loss aborts with a divergence report rather than propagating
    NaNs into the metrics.
    """
    if not split.train:
        raise ValueError("training split is empty")
    dtype = np.dtype(config.dtype)
    if model is None:
        model = build_model(config.model, seed=config.seed, dtype=dtype)
    params = [t for _, t in model.named_parameters()]
    weights = model.weight_tensors()
    state = AdamState(lr=config.lr)

    x_train, y_train = _stack_records(split.train, dtype)
    have_test = bool(split.test)
    if have_test:
        x_test, y_test = _stack_records(split.test, dtype)

    order_rng = np.random.default_rng([config.seed, 0xBA7C])
    n = len(x_train)
    result = RunResult(seed=config.seed)
    started = time.perf_counter()

    for epoch in range(config.epochs):
        state.lr = lr_schedule(epoch, config.epochs, config.fine_tune_epochs,
                               config.lr, config.fine_tune_lr)
        perm = order_rng.permutation(n)
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            model.zero_grad()
            logits = model.forward(x_train[idx])
            loss = softmax_cross_entropy(logits, y_train[idx])
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    f"last gradient norm unavailable (loss={float(loss.data)})")
            loss.backward()
            try:
                constrained_step(state, params, weights, config.model.constrained,
                                 config.max_grad_norm)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"epoch {epoch}, step {step}: {exc}") from exc
            if config.debug_checks and config.model.constrained:
                for w in weights:
                    lo, hi = float(w.data.min()), float(w.data.max())
                    if lo < 0.0 or hi > 1.0:
                        raise AssertionError(f"weight bounds violated: [{lo}, {hi}]")

        ev_train = _eval_arrays(model, x_train, y_train, config.model.n_classes)
        result.train_acc.append(ev_train.accuracy)
        result.train_loss.append(ev_train.loss)
        if have_test:
            ev_test = _eval_arrays(model, x_test, y_test, config.model.n_classes)
            result.test_acc.append(ev_test.accuracy)
            result.test_loss.append(ev_test.loss)
            result.confusion = ev_test.confusion
        else:
            result.test_acc.append(float("nan"))
            result.test_loss.append(float("nan"))
            result.confusion = np.zeros((config.model.n_classes,) * 2, dtype=np.int64)

    result.wall_time = time.perf_counter() - started
    result.sparsity = sparsity_report(model).zero_fraction
    result.model = model
    return result


def multi_seed(config: TrainConfig, split: DatasetSplit, n_runs: int = 5) -> MultiSeedResult:
    """Independent runs with seeds base..base+n-1; sample (n-1) std.

    Diverged runs are reported per seed and excluded from the aggregate.
    """
    if n_runs < 2:
        raise ValueError("multi_seed needs at least 2 runs")
    results, diverged = [], []
    for i in range(n_runs):
        cfg = replace(config, seed=config.seed + i)
        try:
            results.append(train(cfg, split))
        except TrainingDivergedError as exc:
            logger.warning("seed %d diverged: %s", cfg.seed, exc)
            diverged.append(cfg.seed)
    if results:
        finals = np.array([r.final_test_accuracy for r in results])
        mean = float(finals.mean())
        std = float(finals.std(ddof=1)) if len(finals) > 1 else 0.0
    else:
        mean = std = float("nan")
    return MultiSeedResult(mean, std, results, diverged)


def init_sweep(config: TrainConfig, split: DatasetSplit, c_values: Sequence[float],
               n_runs: int = 3) -> list:
    """Accuracy of the constrained model across uniform-init upper bounds."""
    if not config.model.constrained:
        raise ValueError("init sweep applies to constrained models")
    points = []
    for c in c_values:
        spec = replace(config.model, init=InitSpec("uniform_nonneg", float(c)))
        res = multi_seed(replace(config, model=spec), split, n_runs=n_runs)
        per_run = [r.final_test_accuracy for r in res.results]
        points.append(SweepPoint(float(c), res.mean_accuracy, res.std_accuracy, per_run))
        logger.info("init sweep c=%g: %.4f +- %.4f (%d/%d runs)",
                    c, res.mean_accuracy, res.std_accuracy, res.completed, n_runs)
    return points


def sparsity_report(model: AcousticModel, bins: int = 50) -> SparsityReport:
    """Fraction of exactly-zero constrained weights plus a [0,1] histogram.

    Projection produces exact zeros, so the comparison is == 0.0, not a
    tolerance.
    """
    values = [t.data.reshape(-1) for t in model.weight_tensors()]
    flat = np.concatenate(values) if values else np.zeros(0)
    n = flat.size
    zero_fraction = float((flat == 0.0).sum() / n) if n else 0.0
    hist, edges = np.histogram(flat, bins=bins, range=(0.0, 1.0))
    return SparsityReport(zero_fraction, hist, edges, n)


# -- dataset resolution ----------------------------------------------------------


def build_split(config: TrainConfig, manifest=None, cache_dir=None, workers: int = 1) -> DatasetSplit:
    """Materialize the dataset named by the config into a train/test split."""
    if config.dataset == "synthetic":
        classes = list(config.synth_classes) or default_tone_classes(
            config.model.n_classes, config.target_rate)
        train_recs = synth_dataset(config.synth_train_per_class, classes, config.target_rate,
                                   seed=config.data_seed, n_speakers=10, speaker_offset=0)
        test_recs = synth_dataset(config.synth_test_per_class, classes, config.target_rate,
                                  seed=config.data_seed + 1, n_speakers=4, speaker_offset=100)
        return DatasetSplit(train_recs, test_recs,
                            {r.speaker_id for r in train_recs}, {r.speaker_id for r in test_recs})
    if manifest is None:
        raise FileNotFoundError(
            "AudioMNIST datasets need a manifest: download the corpus "
            "(https://github.com/soerenab/AudioMNIST, data/ directory), run "
            "`acoustinet make-manifest --audiomnist-dir <dir> --out manifest.csv`, "
            "and pass --manifest manifest.csv")
    records = load_records(manifest, config.target_rate, cache_dir=cache_dir, workers=workers)
    if config.dataset == "audiomnist-binary":
        records = binary_subset(records)
    return speaker_disjoint_split(records, 0.8, seed=config.data_seed)


# -- CSV emitters ------------------------------------------------------------------


def write_metrics_csv(path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_acc", "test_acc", "train_loss", "test_loss"])
        for e in range(len(result.train_acc)):
            writer.writerow([e, repr(result.train_acc[e]), repr(result.test_acc[e]),
                             repr(result.train_loss[e]), repr(result.test_loss[e])])


def write_confusion_csv(path, confusion: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"pred_{c}" for c in range(confusion.shape[1])])
        for row in confusion:
            writer.writerow([int(v) for v in row])


def write_sweep_csv(path, points: Sequence[SweepPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", "mean_acc", "std_acc"])
        for p in points:
            writer.writerow([repr(p.c), repr(p.mean_accuracy), repr(p.std_accuracy)])
