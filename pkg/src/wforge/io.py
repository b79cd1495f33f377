"""File formats: binary/CSV feature matrices, witness JSON and RFE traces.

Binary feature layout (little-endian)::

    b"WFRG" | version u32 | T u64 | F u32 | T*F float64 (row-major) | T int8 labels
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .trainer import Dataset, TrainConfig, WitnessModel

MAGIC = b"WFRG"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")


class FormatError(ValueError):
    pass


def write_features(path, data: Dataset) -> None:
    T, F = data.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, T, F))
        fh.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data.labels, dtype=np.int8).tobytes())


def read_features(path, basis_id: str = "") -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file too short for a feature header")
    magic, version, T, F = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError("not a feature file (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported feature file version {version}")
    body = T * F * 8
    if len(raw) != _HEADER.size + body + T:
        raise FormatError("feature file length does not match its header")
    X = np.frombuffer(raw, dtype="<f8", count=T * F, offset=_HEADER.size).reshape(T, F)
    y = np.frombuffer(raw, dtype=np.int8, count=T, offset=_HEADER.size + body)
    return Dataset(X.astype(float), y.copy(), basis_id)


def write_features_csv(path, data: Dataset, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", *labels])
        for yv, row in zip(data.labels, data.features):
            w.writerow([int(yv), *(repr(float(v)) for v in row)])


def read_features_csv(path, basis_id: str = "") -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=float)
    return Dataset(body[:, 1:], body[:, 0].astype(np.int8), basis_id)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return float(v)


def _unnum(v):
    if v is None:
        return None
    if v == "inf":
        return math.inf
    return float(v)


def witness_to_dict(model: WitnessModel) -> dict:
    d, n = model.spec
    return {
        "spec": {"d": d, "n": n},
        "basis_id": model.basis_id,
        "basis_labels": list(model.labels),
        "coefficients": [float(c) for c in model.coefficients],
        "normalization": {"scale": float(model.scale), "max_abs": float(np.abs(model.coefficients).max())},
        "p_max": _num(model.p_max),
        "config": model.config,
        "config_digest": _config_digest(model.config),
        "seed": model.config.get("seed"),
        "dataset_digest": model.dataset_digest,
        "converged": model.converged,
        "final_loss": model.final_loss,
    }


def _config_digest(config: dict) -> str:
    try:
        return TrainConfig.from_dict(config).digest()
    except (TypeError, ValueError):
        return ""


def witness_from_dict(doc: dict) -> WitnessModel:
    try:
        spec = (int(doc["spec"]["d"]), int(doc["spec"]["n"]))
        labels = tuple(doc["basis_labels"])
        coef = np.array(doc["coefficients"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed witness document: {exc}") from None
    return WitnessModel(spec, labels, coef, basis_id=doc.get("basis_id", ""),
                        scale=float(doc.get("normalization", {}).get("scale", 1.0)),
                        config=doc.get("config", {}), dataset_digest=doc.get("dataset_digest", ""),
                        p_max=_unnum(doc.get("p_max")), converged=doc.get("converged", True),
                        final_loss=doc.get("final_loss"))


def save_witness(path, model: WitnessModel) -> None:
    Path(path).write_text(json.dumps(witness_to_dict(model), indent=2, ensure_ascii=False))


def load_witness(path) -> WitnessModel:
    return witness_from_dict(json.loads(Path(path).read_text()))


def write_rfe_trace(path, trace) -> None:
    """One JSON object per line: the initial model, then each removal, then the stop reason."""
    with open(path, "w") as fh:
        for step in (trace.initial, *trace.steps):
            rec = step.to_dict()
            rec["p_max"] = _num(rec["p_max"])
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        fh.write(json.dumps({"stop_reason": trace.stop_reason}) + "\n")


def read_rfe_trace(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
