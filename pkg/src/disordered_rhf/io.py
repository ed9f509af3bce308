"""File formats: binary and CSV grid fields, JSON results, CSV tables."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .scf import DensityMatrix
from .spectral import GridField, GridSpec

FIELD_HEADER = struct.Struct("<qqq")
STATE_HEADER = struct.Struct("<qqqq")


def fmt(value) -> str:
    """Reproducible text form: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_field(path, f: GridField) -> Path:
    """Header (d, L, N) as little-endian int64, then float64 node values in row-major order."""
    path = Path(path)
    g = f.grid
    with path.open("wb") as fh:
        fh.write(FIELD_HEADER.pack(g.d, g.L, g.N))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_field(path) -> GridField:
    raw = Path(path).read_bytes()
    if len(raw) < FIELD_HEADER.size:
        raise ValueError(f"{path}: truncated field header")
    d, L, N = FIELD_HEADER.unpack_from(raw)
    grid = GridSpec(int(d), int(L), int(N))
    values = np.frombuffer(raw, dtype="<f8", offset=FIELD_HEADER.size)
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return GridField(grid, values.reshape(grid.shape).astype(float))


def write_state(path, dm: DensityMatrix) -> Path:
    """Header (d, L, N, n_orbitals) as little-endian int64, then n float64
    occupations, n int64 family labels, then complex128 orbitals in
    row-major order."""
    path = Path(path)
    g = dm.grid
    with path.open("wb") as fh:
        fh.write(STATE_HEADER.pack(g.d, g.L, g.N, dm.n_orbitals))
        fh.write(np.ascontiguousarray(dm.occupations, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dm.family, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(dm.orbitals, dtype="<c16").tobytes())
    return path


def read_state(path) -> DensityMatrix:
    """Inverse of write_state; occupations outside [0, 1] raise ValueError."""
    raw = Path(path).read_bytes()
    if len(raw) < STATE_HEADER.size:
        raise ValueError(f"{path}: truncated state header")
    d, L, N, n = STATE_HEADER.unpack_from(raw)
    grid = GridSpec(int(d), int(L), int(N))
    expected = STATE_HEADER.size + 16 * n + 16 * n * grid.size
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    occ = np.frombuffer(raw, dtype="<f8", count=n, offset=STATE_HEADER.size).astype(float)
    fam = np.frombuffer(raw, dtype="<i8", count=n, offset=STATE_HEADER.size + 8 * n).astype(int)
    orb = np.frombuffer(raw, dtype="<c16", offset=STATE_HEADER.size + 16 * n).astype(complex)
    return DensityMatrix(grid, orb.reshape((n, *grid.shape)), occ, fam)


def write_field_csv(path, f: GridField) -> Path:
    """One row per node: coordinates then value."""
    g = f.grid
    coords = [c.ravel() for c in g.coordinates()]
    names = ["x", "y", "z"][: g.d]
    rows = zip(*coords, f.values.ravel())
    return write_csv(path, names + ["value"], rows)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dumps(data) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(dumps(data))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
