"""CSV helpers.  Floats are written with 17 significant digits so that every
value reloads bit-identically."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .grid import Field, Grid, Zero


def format_value(v, precision: int = 17) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{precision}g}"
    return str(v)


def write_csv(path, header: Sequence[str], columns: Sequence, precision: int = 17) -> Path:
    """Write equally long columns under ``header``; returns the path."""
    path = Path(path)
    cols = [list(c) for c in columns]
    if len(cols) != len(header):
        raise DataError("one column per header entry is required")
    if len({len(c) for c in cols}) > 1:
        raise DataError("columns must have equal length")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([format_value(v, precision) for v in row])
    os.replace(tmp, path)
    return path


def read_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Read a numeric CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from None
    return header, {name: data[:, j] for j, name in enumerate(header)}


def write_field(path, f: Field, value_name: str = "value", precision: int = 17) -> Path:
    return write_csv(path, ("x", value_name), [f.grid.x, f.values], precision)


def read_field(path, extension=None) -> Field:
    """Rebuild a field from an ``x,<value>`` CSV; the grid is inferred."""
    header, cols = read_csv(path)
    if len(header) != 2 or header[0] != "x":
        raise DataError(f"{path}: expected header x,<value>, got {header}")
    x, v = cols["x"], cols[header[1]]
    grid = Grid(-float(x[0]), len(x))
    if not np.allclose(grid.x, x, rtol=0, atol=1e-12 * max(1.0, grid.half_width)):
        raise DataError(f"{path}: nodes are not a symmetric uniform grid")
    return Field(grid, v, extension or Zero())
