"""Dataset ingestion: preprocessing chain, speaker-disjoint splits, synthetic tones.

The preprocessing chain fixes every record to exactly one second at the
target rate, peak-normalized and squared to intensity, so all downstream
signals are non-negative and in [0, 1].
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio import load_wav, read_cache, resample, write_cache

__all__ = [
    "AudioRecord",
    "DatasetSplit",
    "preprocess",
    "speaker_disjoint_split",
    "binary_subset",
    "synth_dataset",
    "synth_waveforms",
    "default_tone_classes",
    "make_manifest",
    "load_manifest",
    "load_records",
]

logger = logging.getLogger(__name__)


@dataclass
class AudioRecord:
    """One utterance: squared-amplitude sequence plus labels."""

    intensity: np.ndarray  # float32, exactly sample_rate entries (one second)
    label: int
    speaker_id: int
    sample_rate: int
    source_path: str = ""


@dataclass
class DatasetSplit:
    train: list
    test: list
    train_speakers: set = field(default_factory=set)
    test_speakers: set = field(default_factory=set)


def preprocess(samples, target_rate: int) -> np.ndarray:
    """Pad/crop to one second, peak-normalize, square to intensity.

    Clips longer than one second are center-cropped (logged); silent clips
    stay all-zero (warned) rather than dividing by ~0.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n > target_rate:
        start = (n - target_rate) // 2
        logger.info("clip of %d samples center-cropped to %d", n, target_rate)
        x = x[start:start + target_rate]
    elif n < target_rate:
        x = np.pad(x, (0, target_rate - n))
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak < 1e-9:
        logger.warning("silent clip kept as all-zero intensity")
        return np.zeros(target_rate)
    x = x / peak
    return x * x


def speaker_disjoint_split(records: Sequence[AudioRecord], train_fraction: float = 0.8,
                           seed: int = 0) -> DatasetSplit:
    """Partition by speaker so no voice appears on both sides."""
    speakers = sorted({r.speaker_id for r in records})
    if len(speakers) < 2:
        raise ValueError(f"need at least 2 speakers to split, got {len(speakers)}")
    rng = np.random.default_rng([seed, 0x5B17])
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    n_train = min(max(int(round(len(order) * train_fraction)), 1), len(order) - 1)
    train_speakers = set(order[:n_train])
    test_speakers = set(order[n_train:])
    train = [r for r in records if r.speaker_id in train_speakers]
    test = [r for r in records if r.speaker_id in test_speakers]
    return DatasetSplit(train, test, train_speakers, test_speakers)


def binary_subset(records: Sequence[AudioRecord]) -> list:
    """Keep only digits 0 and 1."""
    return [r for r in records if r.label in (0, 1)]


def default_tone_classes(n_classes: int, target_rate: int) -> list:
    """Geometrically spaced tones between 0.05 and 0.2 of the rate.

    Capped at 0.2 so squared-intensity oscillations (at twice the tone
    frequency) stay clearly below Nyquist.
    """
    return [float(f) for f in np.geomspace(0.05 * target_rate, 0.2 * target_rate, n_classes)]


def synth_waveforms(n_per_class: int, classes: Sequence, target_rate: int, seed: int = 0,
                    n_speakers: int = 10, speaker_offset: int = 0,
                    active_duration: float = 1.0, onset_fraction: float = 0.1,
                    amp_jitter: float = 0.2, snr_db: Optional[float] = 30.0) -> list:
    """Raw waveform clips as (samples, label, speaker_id) triples.

    Each clip is one class tone (or chord) with a raised-cosine onset ramp,
    random phase, +-20% amplitude jitter, and additive noise at the given
    SNR. Tones span the whole clip by default so that recurrent readouts of
    the final state see signal, not padding. Pseudo-speakers are assigned
    round-robin so speaker-disjoint splitting works downstream.
    """
    tone_sets = [tuple(c) if isinstance(c, (tuple, list)) else (float(c),) for c in classes]
    for tones in tone_sets:
        for f in tones:
            if f >= target_rate / 2:
                raise ValueError(f"tone {f} Hz violates Nyquist for rate {target_rate}")
    rng = np.random.default_rng([seed, 0x70E5])
    n_active = int(round(active_duration * target_rate))
    t = np.arange(n_active) / target_rate
    window = np.ones(n_active)
    ramp = int(onset_fraction * n_active)
    if ramp > 0:
        window[:ramp] = np.sin(0.5 * np.pi * np.arange(ramp) / ramp) ** 2

    clips = []
    idx = 0
    for label, tones in enumerate(tone_sets):
        for _ in range(n_per_class):
            amp = 1.0 + (rng.uniform(-amp_jitter, amp_jitter) if amp_jitter > 0 else 0.0)
            x = np.zeros(n_active)
            for f in tones:
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x += np.sin(2.0 * np.pi * f * t + phase)
            x *= amp * window / len(tones)
            if snr_db is not None and np.isfinite(snr_db):
                rms = np.sqrt(np.mean(x * x))
                x = x + rng.normal(0.0, rms * 10.0 ** (-snr_db / 20.0), n_active)
            clips.append((x, label, speaker_offset + idx % n_speakers))
            idx += 1
    return clips


def synth_dataset(n_per_class: int, classes: Sequence, target_rate: int, seed: int = 0,
                  n_speakers: int = 10, speaker_offset: int = 0,
                  active_duration: float = 1.0, onset_fraction: float = 0.1,
                  amp_jitter: float = 0.2, snr_db: Optional[float] = 30.0) -> list:
    """Preprocessed tone records for desk-scale experiments."""
    clips = synth_waveforms(n_per_class, classes, target_rate, seed, n_speakers,
                            speaker_offset, active_duration, onset_fraction,
                            amp_jitter, snr_db)
    return [AudioRecord(preprocess(x, target_rate).astype(np.float32), label, speaker,
                        target_rate, source_path=f"synth://{label}/{i}")
            for i, (x, label, speaker) in enumerate(clips)]


# -- manifest and record loading ------------------------------------------------


def make_manifest(audiomnist_dir, out_path) -> int:
    """Scan the <dir>/<speaker>/<digit>_<speaker>_<idx>.wav layout into a CSV."""
    root = Path(audiomnist_dir)
    rows = []
    for wav in sorted(root.glob("*/*.wav")):
        stem = wav.stem.split("_")
        if len(stem) != 3:
            logger.warning("skipping %s: name not <digit>_<speaker>_<idx>.wav", wav)
            continue
        digit, speaker = int(stem[0]), int(stem[1])
        rows.append((str(wav), digit, speaker))
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "speaker_id"])
        writer.writerows(rows)
    return len(rows)


def load_manifest(path) -> list:
    """Rows of (path, label, speaker_id); relative paths resolve against the CSV."""
    base = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"path", "label", "speaker_id"}:
            raise ValueError(f"manifest {path} must have header path,label,speaker_id")
        for row in reader:
            p = Path(row["path"])
            if not p.is_absolute():
                p = base / p
            rows.append((str(p), int(row["label"]), int(row["speaker_id"])))
    return rows


def _cache_path(cache_dir, source_path: str, rate: int) -> Path:
    digest = hashlib.sha1(f"{source_path}|{rate}".encode()).hexdigest()
    return Path(cache_dir) / f"{digest}.ainn"


def _prepare_one(row, target_rate: int, cache_dir) -> AudioRecord:
    path, label, speaker = row
    if cache_dir is not None:
        cpath = _cache_path(cache_dir, path, target_rate)
        if cpath.exists():
            intensity, rate = read_cache(cpath)
            return AudioRecord(intensity, label, speaker, rate, source_path=path)
    samples, native_rate = load_wav(path)
    x = resample(samples, native_rate, target_rate)
    intensity = preprocess(x, target_rate).astype(np.float32)
    if cache_dir is not None:
        write_cache(_cache_path(cache_dir, path, target_rate), intensity, target_rate)
    return AudioRecord(intensity, label, speaker, target_rate, source_path=path)


def load_records(manifest_path, target_rate: int, cache_dir=None, workers: int = 1) -> list:
    """Load + preprocess every manifest row, sorted by source path.

    Rows may be prepared concurrently; the returned order is always the
    sorted-by-path order, so downstream splits are deterministic.
    """
    rows = sorted(load_manifest(manifest_path), key=lambda r: r[0])
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda r: _prepare_one(r, target_rate, cache_dir), rows))
    return [_prepare_one(r, target_rate, cache_dir) for r in rows]
