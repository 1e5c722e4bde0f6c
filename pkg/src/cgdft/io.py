"""File formats: two-column density CSV, result tables, JSON sidecars.

Floats are written with 17 significant digits and a '.' decimal point so
that files are bit-stable across runs and locales.  Every write goes to a
temporary file in the target directory and is renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import CoarseDensity, FineDensity, Grid, Potential, ScaleHierarchy

__all__ = [
    "format_float",
    "atomic_write_text",
    "table_to_csv",
    "write_table",
    "read_table",
    "write_json",
    "density_to_csv",
    "read_density_csv",
    "potential_to_csv",
    "to_jsonable",
]


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def table_to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_table(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    return atomic_write_text(path, table_to_csv(rows, columns))


def read_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def to_jsonable(obj):
    """Recursively convert numpy values and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else format_float(x)
    return obj


def write_json(path, payload: dict) -> Path:
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n"
    return atomic_write_text(path, text)


def density_to_csv(rho: FineDensity | CoarseDensity) -> str:
    """Two columns ``x, value``: grid points, or cell centres for coarse input."""
    if isinstance(rho, FineDensity):
        xs, values = rho.grid.x, rho.values
    else:
        xs, values = rho.hierarchy.cell_centers(rho.level), rho.averages
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "density"])
    for x, v in zip(xs, values):
        writer.writerow([format_float(x), format_float(v)])
    return buf.getvalue()


def potential_to_csv(v: Potential) -> str:
    """Step function: one row per cell with its left and right edge."""
    edges = v.hierarchy.cell_edges(v.level)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x_left", "x_right", "potential"])
    for a, b, val in zip(edges[:-1], edges[1:], v.values):
        writer.writerow([format_float(a), format_float(b), format_float(val)])
    return buf.getvalue()


def read_density_csv(path, grid: Grid) -> FineDensity | CoarseDensity:
    """Read a two-column ``x, value`` file written by :func:`density_to_csv`.

    The row count decides the kind: ``M`` rows give a fine density, ``2^n``
    rows a level-``n`` coarse density.  Coordinates must match the grid.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    xs, values = data[:, 0], data[:, 1]
    hier = ScaleHierarchy(grid)
    if xs.size == grid.points:
        expected = grid.x
    else:
        level = int(round(math.log2(xs.size))) if xs.size > 0 else -1
        if 2**level != xs.size or level not in hier.levels:
            raise ValueError(f"{path}: {xs.size} rows matches no level of the grid")
        expected = hier.cell_centers(level)
    if not np.allclose(xs, expected, rtol=0, atol=1e-9 * grid.length):
        raise ValueError(f"{path}: coordinates do not match the configured grid")
    if xs.size == grid.points:
        return FineDensity(grid, values)
    return CoarseDensity(hier, level, values)
