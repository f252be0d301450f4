"""Binary checkpoint format.

Layout: magic "ANNC", u16 version, u32-length-prefixed JSON block (model
spec + training metadata), u32 entry count, then per entry: u16-length
UTF-8 name, u32 rank + u32 dims, float32 little-endian data. Parameters
are stored and restored bitwise, so a loaded model reproduces the original
model's outputs exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import AcousticModel, StructuralError, build_model
from .presets import model_spec_from_dict, model_spec_to_dict

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"ANNC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: AcousticModel, seed: int = 0, epochs_completed: int = 0,
                    config_hash: str = "") -> None:
    meta = {
        "seed": int(seed),
        "epochs_completed": int(epochs_completed),
        "config_hash": config_hash,
        "constrained": bool(model.spec.constrained),
    }
    block = json.dumps({"model": model_spec_to_dict(model.spec), "meta": meta},
                       sort_keys=True).encode("utf-8")
    entries = model.all_entries()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(block)))
        fh.write(block)
        fh.write(struct.pack("<I", len(entries)))
        for name, t, _kind in entries:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple:
    """Rebuild the model from a checkpoint; returns (model, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (block_len,) = struct.unpack_from("<I", blob, 6)
    pos = 10
    try:
        header = json.loads(blob[pos:pos + block_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt spec block: {exc}") from exc
    pos += block_len
    spec = model_spec_from_dict(header["model"])
    meta = header["meta"]

    (n_entries,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    table = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        table[name] = arr

    model = build_model(spec, seed=meta.get("seed", 0), dtype=np.float32)
    for name, t, _kind in model.all_entries():
        if name not in table:
            raise StructuralError(f"checkpoint is missing parameter {name!r}")
        arr = table.pop(name)
        if arr.shape != t.data.shape:
            raise StructuralError(
                f"parameter {name!r}: checkpoint shape {arr.shape} does not match model shape {t.data.shape}")
        np.copyto(t.data, arr)
    if table:
        raise StructuralError(f"checkpoint has unknown parameters: {sorted(table)}")
    return model, meta
