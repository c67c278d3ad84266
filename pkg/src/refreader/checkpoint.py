"""Parameter checkpoints as ordered JSON records.

Floats are written with ``repr`` precision, so a save/load round trip is exact
and two runs with identical parameters produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

FORMAT = "refreader-checkpoint"
VERSION = 1


def dumps(params: Mapping[str, Tensor]) -> str:
    records = [
        {"name": name, "shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
        for name, t in params.items()
    ]
    return json.dumps({"format": FORMAT, "version": VERSION, "params": records}, separators=(",", ":"))


def loads(text: str) -> dict[str, np.ndarray]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError("not a refreader checkpoint")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    out: dict[str, np.ndarray] = {}
    for rec in doc["params"]:
        arr = np.asarray(rec["values"], dtype=np.float64)
        out[rec["name"]] = arr.reshape(rec["shape"])
    return out


def save(path, params: Mapping[str, Tensor]) -> None:
    Path(path).write_text(dumps(params))


def load_into(path, params: Mapping[str, Tensor]) -> None:
    """Overwrite ``params`` in place from a checkpoint with matching names and shapes."""
    values = loads(Path(path).read_text())
    missing = set(params) - set(values)
    if missing:
        raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
    for name, t in params.items():
        if values[name].shape != t.shape:
            raise ValueError(f"shape mismatch for {name}: {values[name].shape} vs {t.shape}")
        t.data = values[name].copy()
