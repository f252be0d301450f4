"""WAV file I/O, band-limited resampling, and the intensity cache format."""

from __future__ import annotations

import math
import struct

import numpy as np
from scipy import signal as sps

__all__ = [
    "WavParseError",
    "WavFormatError",
    "load_wav",
    "write_wav",
    "resample",
    "write_cache",
    "read_cache",
    "CACHE_MAGIC",
]

CACHE_MAGIC = b"AINN"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sHHII")  # magic, version, reserved, rate, length


class WavParseError(ValueError):
    """Malformed RIFF/WAVE structure; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class WavFormatError(ValueError):
    """Structurally valid WAV whose sample encoding is unsupported."""


def load_wav(path) -> tuple:
    """Read a RIFF/WAVE file into float samples in [-1, 1] plus its rate.

    Supports PCM 8/16/32-bit and IEEE float32, mono or multi-channel
    (channels are averaged). Values are scaled by the format's full scale.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise WavParseError("file too short for a RIFF header", 0)
    if blob[0:4] != b"RIFF":
        raise WavParseError(f"bad RIFF magic {blob[0:4]!r}", 0)
    if blob[8:12] != b"WAVE":
        raise WavParseError(f"bad WAVE tag {blob[8:12]!r}", 8)

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body_start = pos + 8
        if body_start + size > len(blob):
            raise WavParseError(f"chunk {cid!r} of size {size} runs past end of file", pos)
        body = blob[body_start:body_start + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavParseError(f"fmt chunk too short ({size} bytes)", pos)
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = (body, body_start)
        pos = body_start + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise WavParseError("missing fmt chunk", pos)
    if data is None:
        raise WavParseError("missing data chunk", pos)
    audio_format, n_channels, rate, _byte_rate, _block_align, bits = fmt
    if n_channels < 1:
        raise WavParseError("fmt chunk declares zero channels", 12)
    body, data_offset = data

    if audio_format == 1:  # integer PCM
        if bits == 8:
            samples = (np.frombuffer(body, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif bits == 16:
            samples = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 32:
            samples = np.frombuffer(body, dtype="<i4").astype(np.float64) / 2147483648.0
        else:
            raise WavFormatError(f"unsupported PCM bit depth {bits}")
    elif audio_format == 3:  # IEEE float
        if bits != 32:
            raise WavFormatError(f"unsupported float bit depth {bits}")
        samples = np.frombuffer(body, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"unsupported codec 0x{audio_format:04x} at byte offset {data_offset}")

    if n_channels > 1:
        usable = (len(samples) // n_channels) * n_channels
        samples = samples[:usable].reshape(-1, n_channels).mean(axis=1)
    return samples, int(rate)


def write_wav(path, samples, rate: int) -> None:
    """Write mono 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    hdr = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    hdr += b"data" + struct.pack("<I", len(body))
    with open(path, "wb") as fh:
        fh.write(hdr + body)


def resample(samples, native_rate: int, target_rate: int) -> np.ndarray:
    """Band-limited downsampling to target_rate.

    A Kaiser-windowed sinc low-pass with passband edge at 0.45*target_rate
    and >= 60 dB stopband attenuation beyond the target Nyquist precedes
    rational-ratio polyphase interpolation. Output length is
    round(len * target / native).
    """
    x = np.asarray(samples, dtype=np.float64)
    if target_rate == native_rate:
        return x.copy()
    if target_rate > native_rate:
        raise ValueError(f"upsampling ({native_rate} -> {target_rate} Hz) is not supported")

    g = math.gcd(int(native_rate), int(target_rate))
    up, down = target_rate // g, native_rate // g
    design_rate = native_rate * up
    width = (0.50 * target_rate - 0.45 * target_rate) / (design_rate / 2.0)
    numtaps, beta = sps.kaiserord(60.0, width)
    numtaps |= 1  # type-I (odd) for a symmetric, delay-compensable filter
    h = sps.firwin(numtaps, 0.475 * target_rate, window=("kaiser", beta), fs=design_rate)
    y = sps.resample_poly(x, up, down, window=h * up)

    n_out = int(round(len(x) * target_rate / native_rate))
    if len(y) > n_out:
        y = y[:n_out]
    elif len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return y


# -- preprocessed-intensity cache -------------------------------------------


def write_cache(path, intensity: np.ndarray, rate: int) -> None:
    """One record per file: 16-byte header then float32 little-endian data."""
    arr = np.asarray(intensity, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, int(rate), arr.size))
        fh.write(arr.tobytes())


def read_cache(path) -> tuple:
    """Returns (intensity float32 array, rate)."""
    with open(path, "rb") as fh:
        header = fh.read(_CACHE_HEADER.size)
        if len(header) < _CACHE_HEADER.size:
            raise WavParseError("cache file too short for header", 0)
        magic, version, _reserved, rate, length = _CACHE_HEADER.unpack(header)
        if magic != CACHE_MAGIC:
            raise WavParseError(f"bad cache magic {magic!r}", 0)
        if version != CACHE_VERSION:
            raise WavFormatError(f"unsupported cache version {version}")
        payload = fh.read(4 * length)
    if len(payload) != 4 * length:
        raise WavParseError(f"cache truncated: expected {length} samples", _CACHE_HEADER.size)
    return np.frombuffer(payload, dtype="<f4").copy(), int(rate)
