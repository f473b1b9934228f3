"""Dataset files: a flat little-endian binary layout, CSV for small cases,
and a JSON sidecar describing the lattice and the truth.

Binary layout: three int64 (p1, p2, n) then ``n * p1 * p2`` float64,
replication-major, each replication row-major.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .lattice import LatticeSpec
from .simulate import FieldObservations

_HEADER = np.dtype("<i8")
_VALUES = np.dtype("<f8")


def write_binary(obs: FieldObservations, path) -> None:
    p1, p2 = obs.lattice.shape
    with open(path, "wb") as fh:
        fh.write(np.array([p1, p2, obs.n], dtype=_HEADER).tobytes())
        fh.write(np.ascontiguousarray(obs.data, dtype=_VALUES).tobytes())


def read_binary(path, toroidal: bool = True) -> FieldObservations:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise ValueError(f"{path}: truncated header")
    p1, p2, n = (int(v) for v in np.frombuffer(raw[:24], dtype=_HEADER))
    expected = 24 + 8 * n * p1 * p2
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {n}x{p1}x{p2}, found {len(raw)}")
    data = np.frombuffer(raw[24:], dtype=_VALUES).reshape(n, p1, p2).astype(float)
    return FieldObservations(LatticeSpec(p1, p2, toroidal), data)


def write_csv(obs: FieldObservations, path) -> None:
    """One row per node: ``rep, i, j, value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "i", "j", "value"])
        for k in range(obs.n):
            for i in range(obs.lattice.p1):
                for j in range(obs.lattice.p2):
                    w.writerow([k, i, j, repr(float(obs.data[k, i, j]))])


def read_csv(path, toroidal: bool = True) -> FieldObservations:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append((int(r["rep"]), int(r["i"]), int(r["j"]), float(r["value"])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    n = max(r[0] for r in rows) + 1
    p1 = max(r[1] for r in rows) + 1
    p2 = max(r[2] for r in rows) + 1
    data = np.full((n, p1, p2), np.nan)
    for k, i, j, v in rows:
        data[k, i, j] = v
    if np.isnan(data).any():
        raise ValueError(f"{path}: missing nodes")
    return FieldObservations(LatticeSpec(p1, p2, toroidal), data)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_sidecar(path, meta: dict) -> None:
    sidecar_path(path).write_text(dumps(meta))


def read_sidecar(path) -> dict | None:
    sp = sidecar_path(path)
    return json.loads(sp.read_text()) if sp.exists() else None


def load_dataset(path) -> tuple[FieldObservations, dict | None]:
    """Read a dataset, taking the lattice type from its sidecar when present."""
    meta = read_sidecar(path)
    toroidal = True if meta is None else bool(meta.get("lattice", {}).get("toroidal", True))
    if str(path).endswith(".csv"):
        return read_csv(path, toroidal), meta
    return read_binary(path, toroidal), meta


def _round17(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round17(obj.item())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, ``inf`` allowed."""
    return json.dumps(_round17(obj), indent=2, sort_keys=True)
