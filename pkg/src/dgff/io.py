"""File formats: binary fields, CSV atom tables, canonical JSON.

Field binary layout (little-endian)::

    b"DGFF" | u32 version=1 | u64 N | u64 n | n x (i32 x, i32 y) | n x f64 value

Vertices are stored in the domain's lexicographic order.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .domain import LatticeDomain
from .measure import PointMeasure
from .sampler.lattice import Field

MAGIC = b"DGFF"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(ValueError):
    pass


def field_to_bytes(h: Field) -> bytes:
    v = h.domain.vertices
    if v.size and (v.min() < -(2**31) or v.max() >= 2**31):
        raise FormatError("vertex coordinates do not fit in int32")
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, int(h.N), h.domain.size),
        np.ascontiguousarray(v, dtype="<i4").tobytes(),
        np.ascontiguousarray(h.values, dtype="<f8").tobytes(),
    ])


def field_from_bytes(data: bytes, parent=None) -> Field:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, N, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    need = _HEADER.size + 16 * n
    if len(data) != need:
        raise FormatError(f"expected {need} bytes, got {len(data)}")
    off = _HEADER.size
    v = np.frombuffer(data, dtype="<i4", count=2 * n, offset=off).reshape(n, 2).astype(np.int64)
    vals = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 * n).astype(float)
    L = LatticeDomain(int(N), v, parent)
    if not np.array_equal(L.vertices, v):
        raise FormatError("vertices are not in lexicographic order")
    return Field(L, vals)


def write_field(path, h: Field) -> None:
    Path(path).write_bytes(field_to_bytes(h))


def read_field(path, parent=None) -> Field:
    return field_from_bytes(Path(path).read_bytes(), parent)


def _fmt(x: float) -> str:
    return repr(float(x))


def atoms_to_csv(mu: PointMeasure) -> str:
    """Columns x, y, depth, weight (depth empty for spatial measures)."""
    lines = ["x,y,depth,weight"]
    d = mu.depths
    for k in range(len(mu)):
        x, y = mu.positions[k]
        lines.append(",".join([_fmt(x), _fmt(y), "" if d is None else _fmt(d[k]), _fmt(mu.weights[k])]))
    return "\n".join(lines) + "\n"


def write_atoms_csv(path, mu: PointMeasure) -> None:
    Path(path).write_text(atoms_to_csv(mu))


def read_atoms_csv(path) -> PointMeasure:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "x,y,depth,weight":
        raise FormatError("unexpected CSV header")
    cols = [r.split(",") for r in rows[1:]]
    pos = np.array([[float(c[0]), float(c[1])] for c in cols]).reshape(-1, 2)
    w = np.array([float(c[3]) for c in cols])
    spatial = all(c[2] == "" for c in cols) and cols
    d = None if spatial else np.array([float(c[2]) for c in cols])
    return PointMeasure(pos, w, d)


def write_table_csv(path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) if np.issubdtype(type(v), np.floating) or isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def canonical_json(obj) -> str:
    """Sorted keys, fixed separators, shortest round-trip floats; non-finite floats as strings."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, separators=(",", ": "), allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj))
