"""Export trained parameters as a physical acoustic blueprint.

Every weight entry becomes one propagation path with a transmission
coefficient in [0,1] and its attenuation in dB (intensity convention,
-10*log10(w)); every hidden unit becomes a neuron with an activation kind
and threshold; every sinc channel becomes a passband. Unconstrained models
carry weights outside [0,1], which have no transmission interpretation, so
exporting them requires ``force`` and flags the output as non-physical.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .layers import AcousticModel

__all__ = ["BlueprintError", "build_blueprint", "export_blueprint"]

FORMAT_VERSION = 1


class BlueprintError(ValueError):
    pass


def _attenuation_db(w: float):
    if w == 0.0:
        return "inf"
    return -10.0 * math.log10(w)


def _connections_for(param_name: str, values: np.ndarray, src: str, dst: str,
                     constrained: bool) -> list:
    conns = []
    if values.ndim == 2:
        stacked = values[None, :, :]
        positions = [None]
    else:
        stacked = values
        positions = list(range(values.shape[0]))
    for p, mat in zip(positions, stacked):
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                w = float(mat[i, j])
                if constrained and not 0.0 <= w <= 1.0:
                    raise BlueprintError(
                        f"{param_name}[{i},{j}] = {w} outside [0,1]; projection should make this impossible")
                conn = {
                    "from": f"{src}[{j}]",
                    "to": f"{dst}[{i}]",
                    "via": param_name,
                    "transmission": w,
                    "attenuation_db": _attenuation_db(w) if constrained else None,
                }
                if p is not None:
                    conn["position"] = p
                if w == 0.0:
                    conn["prunable"] = True
                conns.append(conn)
    return conns


def build_blueprint(model: AcousticModel, meta: dict | None = None, force: bool = False) -> dict:
    spec = model.spec
    if not spec.constrained and not force:
        raise BlueprintError(
            "refusing to export an unconstrained model: weights outside [0,1] are not "
            "physical transmissions (use force to export verbatim, flagged non-physical)")

    filters = []
    if model.sinc_bank is not None:
        nyquist = model.sinc_bank.nyquist
        for ch, (f1, f2) in enumerate(model.sinc_bank.effective_bands()):
            if not f1 < f2 <= nyquist:
                raise BlueprintError(
                    f"sinc channel {ch} has invalid passband [{f1:.3f}, {f2:.3f}] Hz (Nyquist {nyquist:.1f})")
            filters.append({"channel": ch, "f_low_hz": float(f1), "f_high_hz": float(f2)})

    layers = []
    connections = []

    def neurons(layer_name: str, n: int, activation) -> dict:
        entry = {"layer": layer_name, "units": n,
                 "activation": activation.kind if activation else "linear"}
        if activation is not None and activation.kind != "tanh":
            entry["threshold"] = activation.offset
        entry["neurons"] = [{"index": i} for i in range(n)]
        return entry

    if spec.variant == "rnn":
        cell = model.rnn_cell
        h = cell.hidden_size
        layers.append(neurons("rnn", h, cell.activation))
        connections += _connections_for("rnn.w_in", cell.w_in.data, "input", "rnn", spec.constrained)
        connections += _connections_for("rnn.w_rec", cell.w_rec.data, "rnn", "rnn", spec.constrained)
        prev = "rnn"
    else:
        prev = "sinc" if spec.variant == "sinc_hsrnn" else "input"
        for l, layer in enumerate(model.hs_layers):
            name = f"hs{l}"
            layers.append(neurons(name, layer.hidden_size, layer.activation))
            connections += _connections_for(f"{name}.w_pos", layer.w_pos.data, prev, name, spec.constrained)
            connections += _connections_for(f"{name}.w_rec", layer.w_rec.data, name, name, spec.constrained)
            prev = name

    for j, dense in enumerate(model.dense_layers):
        name = f"dense{j}"
        layers.append(neurons(name, dense.w.shape[0], dense.activation))
        connections += _connections_for(f"{name}.w", dense.w.data, prev, name, spec.constrained)
        prev = name
    layers.append(neurons("out", model.out_layer.w.shape[0], None))
    connections += _connections_for("out.w", model.out_layer.w.data, prev, "out", spec.constrained)

    header = {
        "format": "acoustic-blueprint",
        "version": FORMAT_VERSION,
        "attenuation_convention": "intensity dB: attenuation_db = -10*log10(transmission)",
        "constrained": bool(spec.constrained),
        "non_physical": not spec.constrained,
        "readout": "argmax over out[*] signals (comparator stage, parameters unspecified)",
        "variant": spec.variant,
        "n_connections": len(connections),
    }
    if meta:
        header["training_meta"] = meta
    return {"meta": header, "filters": filters, "layers": layers, "connections": connections}


def export_blueprint(checkpoint_path, out_path, force: bool = False) -> dict:
    """Load a checkpoint, build its blueprint, and write JSON."""
    from .checkpoint import load_checkpoint

    model, meta = load_checkpoint(checkpoint_path)
    bp = build_blueprint(model, meta=meta, force=force)
    with open(out_path, "w") as fh:
        json.dump(bp, fh, indent=2)
    return bp
