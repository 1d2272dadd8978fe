"""Grid dumps and plain-text reports.

A grid dump is one ASCII header line followed by raw little-endian
float64 data.  The header reads::

    CGRID dims=n0,n1,n2 h=... origin=o0,o1,o2 kind=... ncomp=... dtype=float64|complex128

Nodes are written in C order (x2 fastest) and the ``ncomp`` components
of a node are adjacent.  Complex values are stored as (re, im) pairs.
Floats in headers and CSV cells use ``repr`` so they round-trip exactly
and print identically on every run.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .fields import Grid3D

MAGIC = "CGRID"
KINDS = ("scalar", "vector", "clifford", "mask")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def write_grid(path, field, grid, kind="scalar"):
    """Write ``field`` (shape ``grid.shape`` or ``(ncomp,) + grid.shape``)."""
    if kind not in KINDS:
        raise ValueError(f"unknown field kind {kind!r}")
    a = np.asarray(field)
    grid.check(a)
    if a.ndim == 3:
        a = a[None]
    ncomp = a.shape[0]
    is_complex = np.iscomplexobj(a)
    nodes = np.moveaxis(a, 0, -1)  # (n0, n1, n2, ncomp)
    if is_complex:
        data = np.stack([nodes.real, nodes.imag], axis=-1).astype("<f8")
    else:
        data = nodes.astype("<f8")
    header = " ".join([
        MAGIC,
        "dims=" + ",".join(str(n) for n in grid.shape),
        "h=" + _fmt(grid.h),
        "origin=" + ",".join(_fmt(o) for o in grid.origin),
        f"kind={kind}",
        f"ncomp={ncomp}",
        "dtype=" + ("complex128" if is_complex else "float64"),
    ])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(data).tobytes())


def read_grid(path):
    """Return ``(field, grid, kind)``; single-component fields come back 3-D."""
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii").split()
        payload = fh.read()
    if not line or line[0] != MAGIC:
        raise ValueError(f"{path}: not a grid dump")
    meta = dict(tok.split("=", 1) for tok in line[1:])
    dims = tuple(int(v) for v in meta["dims"].split(","))
    grid = Grid3D(dims, float(meta["h"]), tuple(float(v) for v in meta["origin"].split(",")))
    ncomp = int(meta["ncomp"])
    cplx = meta.get("dtype", "float64") == "complex128"
    per = ncomp * (2 if cplx else 1)
    expect = int(np.prod(dims)) * per * 8
    if len(payload) != expect:
        raise ValueError(f"{path}: expected {expect} data bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    if cplx:
        data = data.reshape(dims + (ncomp, 2))
        data = data[..., 0] + 1j * data[..., 1]
    else:
        data = data.reshape(dims + (ncomp,))
    field = np.moveaxis(data, -1, 0)
    if ncomp == 1:
        field = field[0]
    return field, grid, meta["kind"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
