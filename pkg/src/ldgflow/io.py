"""Artifact serialization: CSV tables and binary field snapshots.

Snapshot format: ``<base>.json`` holds the header (grid dimensions, basis
identifier, endianness tag, time, config hash) and ``<base>.bin`` the raw
little-endian float64 coordinates, row-major over grid points with the 5
tensor components fastest-varying.  Writing is canonical so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import LdgflowError
from .elastic import QField, SpectralGrid
from .tensor import BASIS_ID

__all__ = [
    "write_series_csv",
    "write_csv",
    "write_snapshot",
    "read_snapshot",
    "error_json",
]

SERIES_HEADER = "t,energy,elastic,bulk,quad,slope_l2,grad_l2_sq,min_margin,linf_dev_mean,eff_tau"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: str, rows) -> None:
    """Write rows (iterables of scalars) under a fixed comma-joined header."""
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_series_csv(path, series: dict) -> None:
    cols = SERIES_HEADER.split(",")
    n = len(series[cols[0]])
    rows = ([series[c][i] for c in cols] for i in range(n))
    write_csv(path, SERIES_HEADER, rows)


def write_snapshot(base, field: QField, time: float, config_hash: str = "") -> None:
    header = {
        "basis": BASIS_ID,
        "config_hash": config_hash,
        "dim": field.grid.dim,
        "dtype": "float64",
        "endianness": "little",
        "n_points_per_axis": field.grid.N,
        "time": float(time),
    }
    with open(str(base) + ".json", "w") as fh:
        json.dump(header, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    data = np.ascontiguousarray(field.values, dtype="<f8")
    with open(str(base) + ".bin", "wb") as fh:
        fh.write(data.tobytes())


def read_snapshot(base):
    """Load a snapshot pair; returns (QField, header dict)."""
    with open(str(base) + ".json", "r") as fh:
        header = json.load(fh)
    if header.get("basis") != BASIS_ID:
        raise LdgflowError(
            f"snapshot basis {header.get('basis')!r} does not match {BASIS_ID!r}"
        )
    grid = SpectralGrid(int(header["dim"]), int(header["n_points_per_axis"]))
    raw = np.fromfile(str(base) + ".bin", dtype="<f8")
    values = raw.reshape(grid.shape + (5,)).astype(float)
    return QField(grid, values), header


def error_json(exc: Exception) -> str:
    code = getattr(exc, "exit_code", 1)
    payload = {
        "error": type(exc).__name__,
        "exit_code": int(code),
        "message": str(exc),
    }
    report = getattr(exc, "report", None)
    if report:
        payload["report"] = {k: _jsonable(v) for k, v in report.items()}
    margin = getattr(exc, "margin", None)
    if margin is not None:
        payload["margin"] = float(margin)
    return json.dumps(payload, sort_keys=True)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v
