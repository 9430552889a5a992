"""Legacy ASCII VTK and CSV writers. Floats are written with %.17g so runs are byte-reproducible."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import GridSpec, ScalarField


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def write_table(path: Path | str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_field_csv(path: Path | str, f: ScalarField) -> None:
    """One line per cell: index, cell-centre coordinates, value (C order of the index tuple)."""
    grid = f.grid
    axes = "xyz"[: grid.dim]
    mesh = np.meshgrid(*[grid.axis_centers(a) for a in range(grid.dim)], indexing="ij")
    coords = [m.ravel() for m in mesh]
    values = f.values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *axes, "value"])
        for i in range(values.size):
            w.writerow([str(i), *(fmt(c[i]) for c in coords), fmt(values[i])])


def write_vtk(path: Path | str, f: ScalarField, name: str = "u", title: str = "diffuse_willmore field") -> None:
    """STRUCTURED_POINTS with point data at the cell centres (x varies fastest)."""
    grid = f.grid
    dims = list(grid.shape) + [1] * (3 - grid.dim)
    origin = [o + 0.5 * grid.h for o in grid.origin] + [0.0] * (3 - grid.dim)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(d) for d in dims),
        "ORIGIN " + " ".join(fmt(o) for o in origin),
        "SPACING " + " ".join([fmt(grid.h)] * 3),
        f"POINT_DATA {grid.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    values = f.values.ravel(order="F")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        for start in range(0, values.size, 6):
            fh.write(" ".join(fmt(v) for v in values[start : start + 6]) + "\n")


def read_vtk(path: Path | str, dim: int | None = None) -> ScalarField:
    """Read a file produced by :func:`write_vtk` (a trailing unit axis is dropped unless ``dim`` = 3)."""
    with open(path) as fh:
        text = fh.read().split("\n")
    header = {}
    i = 0
    while i < len(text) and not text[i].startswith("LOOKUP_TABLE"):
        parts = text[i].split()
        if parts and parts[0] in ("DIMENSIONS", "ORIGIN", "SPACING", "DATASET"):
            header[parts[0]] = parts[1:]
        i += 1
    if header.get("DATASET") != ["STRUCTURED_POINTS"] or i == len(text):
        raise ValueError(f"{path}: not a legacy STRUCTURED_POINTS file")
    dims = [int(d) for d in header["DIMENSIONS"]]
    origin = [float(o) for o in header["ORIGIN"]]
    spacing = [float(s) for s in header["SPACING"]]
    if len(set(spacing)) != 1:
        raise ValueError(f"{path}: spacing must be uniform")
    ndim = dim if dim is not None else (3 if dims[2] > 1 else 2)
    values = np.array(" ".join(text[i + 1 :]).split(), dtype=float)
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {values.size}")
    h = spacing[0]
    values = values.reshape(dims, order="F")
    if ndim == 2:
        values = values[:, :, 0]
    grid = GridSpec(tuple(dims[:ndim]), tuple(o - 0.5 * h for o in origin[:ndim]), h)
    return ScalarField(grid, values)
