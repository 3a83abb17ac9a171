"""Field, curve and point-set dumps.

Binary block layout (little-endian, version 1)::

    4 bytes   magic b"LCSK"
    u32       version
    u32 u32   nx, ny
    4 x f64   xmin, xmax, ymin, ymax
    u32       ncols
    ncols x 16 bytes   ASCII column names, NUL padded
    f64[nx*ny, ncols]  payload, point-major, point index j*nx + i

Scattered point sets are written with ``ny = 1`` and NaN extents.
"""
from __future__ import annotations

import csv
import struct

import numpy as np

MAGIC = b"LCSK"
VERSION = 1
_HEADER = struct.Struct("<4sIII4dI")
_NAME = 16


def write_block(path, columns, grid=None):
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype="<f8") for k in names])
    if grid is not None:
        nx, ny = grid.nx, grid.ny
        ext = (*grid.x_range, *grid.y_range)
    else:
        nx, ny = data.shape[0], 1
        ext = (np.nan,) * 4
    if nx * ny != data.shape[0]:
        raise ValueError("column length does not match the grid")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, nx, ny, *ext, len(names)))
        for name in names:
            raw = name.encode("ascii")
            if len(raw) > _NAME:
                raise ValueError(f"column name too long: {name}")
            fh.write(raw.ljust(_NAME, b"\0"))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_block(path):
    """Return ``(header, columns)``; ``header`` has nx, ny and extents."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, nx, ny, x0, x1, y0, y1, ncols = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not an LCSK block")
    if version != VERSION:
        raise ValueError(f"unsupported LCSK version {version}")
    off = _HEADER.size
    names = []
    for _ in range(ncols):
        names.append(raw[off:off + _NAME].rstrip(b"\0").decode("ascii"))
        off += _NAME
    data = np.frombuffer(raw, dtype="<f8", offset=off).reshape(nx * ny, ncols)
    header = {"nx": nx, "ny": ny, "x_range": (x0, x1), "y_range": (y0, y1)}
    return header, {k: data[:, i].copy() for i, k in enumerate(names)}


def write_csv(path, columns):
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return repr(float(v))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in body]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out
