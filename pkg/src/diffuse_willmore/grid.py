"""Uniform Cartesian grids, scalar fields, the container mask and stencils.

Cells are indexed ``[i0, i1(, i2)]`` with centers at ``origin + (i + 1/2) h``.
Neighbours outside the container are replaced by ghost values:

``dirichlet_minus_one``
    ghost = -1 (the phase field vanishes outside the container),
``neumann``
    ghost = value of the centre cell (mirror),
``dirichlet_zero``
    ghost = 0, the linear part of ``dirichlet_minus_one``; used for adjoints.

All operators return zero on outside cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

BoundaryCondition = Literal["dirichlet_minus_one", "neumann", "dirichlet_zero"]
EXTERIOR_VALUE = -1.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid in 2D or 3D."""

    cells_per_axis: tuple[int, ...]
    origin: tuple[float, ...]
    h: float

    def __post_init__(self) -> None:
        cells = tuple(int(n) for n in self.cells_per_axis)
        origin = tuple(float(o) for o in self.origin)
        object.__setattr__(self, "cells_per_axis", cells)
        object.__setattr__(self, "origin", origin)
        if len(cells) not in (2, 3):
            raise ValueError("grid dimension must be 2 or 3")
        if len(origin) != len(cells):
            raise ValueError("origin must have one entry per axis")
        if any(n < 4 for n in cells):
            raise ValueError("every axis needs at least 4 cells")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError("spacing h must be positive")
        if int(np.prod(cells, dtype=object)) > np.iinfo(np.intp).max:
            raise ValueError("grid too large for this platform")

    @classmethod
    def from_box(cls, lower: Sequence[float], upper: Sequence[float], h: float) -> "GridSpec":
        """Grid covering [lower, upper] with spacing close to ``h`` (rounded to whole cells)."""
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        cells = np.maximum(np.rint((upper - lower) / h).astype(int), 4)
        # one spacing for all axes: the longest axis sets it exactly
        spacing = float(np.max((upper - lower) / cells))
        centre = 0.5 * (lower + upper)
        origin = centre - 0.5 * cells * spacing
        return cls(tuple(cells), tuple(origin), spacing)

    @property
    def dim(self) -> int:
        return len(self.cells_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + n * self.h for o, n in zip(self.origin, self.cells_per_axis))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.cells_per_axis[axis]) + 0.5) * self.h

    def centers(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (open mesh) of the cell centres."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij", sparse=True))

    def ghost_ring_centers(self) -> np.ndarray:
        """Centres of the one-cell layer just outside the grid, shape (m, dim)."""
        axes = [self.origin[a] + (np.arange(-1, n + 1) + 0.5) * self.h for a, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        ring = np.ones(tuple(n + 2 for n in self.shape), bool)
        ring[tuple(slice(1, -1) for _ in self.shape)] = False
        return np.stack([m[ring] for m in mesh], axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """Values of a scalar quantity at the cell centres of ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} cells")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Cells whose centre lies in the container."""

    grid: GridSpec
    inside: np.ndarray
    exterior_value_u: float = field(default=EXTERIOR_VALUE)

    def __post_init__(self) -> None:
        inside = np.asarray(self.inside, dtype=bool).reshape(self.grid.shape)
        object.__setattr__(self, "inside", inside)
        if not inside.any():
            raise ValueError("the container contains no cell centre")
        _, count = ndimage.label(inside)
        if count != 1:
            raise ValueError(f"container cells must be face-connected, found {count} pieces")

    @classmethod
    def full(cls, grid: GridSpec) -> "DomainMask":
        return cls(grid, np.ones(grid.shape, bool))

    @classmethod
    def ball(cls, grid: GridSpec, center: Sequence[float], radius: float) -> "DomainMask":
        xs = grid.centers()
        r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
        return cls(grid, np.broadcast_to(r2 < radius * radius, grid.shape))

    @cached_property
    def is_full(self) -> bool:
        return bool(self.inside.all())

    @cached_property
    def volume(self) -> float:
        return float(self.inside.sum()) * self.grid.cell_volume

    @cached_property
    def neighbor_inside(self) -> dict[tuple[int, int], np.ndarray]:
        """For each (axis, +-1): is the neighbour cell inside the container?"""
        out = {}
        for axis in range(self.grid.dim):
            for step in (1, -1):
                out[(axis, step)] = self.inside & _shift(self.inside, axis, step, False)
        return out

    @cached_property
    def boundary_face_weight(self) -> dict[tuple[int, int], np.ndarray]:
        """Share of each face's squared difference owned by the cell: 1/2, or 1 on the container boundary."""
        return {k: np.where(v, 0.5, 1.0) for k, v in self.neighbor_inside.items()}

    def check_grid(self, *fields: ScalarField) -> None:
        for f in fields:
            if f.grid != self.grid:
                raise ValueError("field and mask live on different grids")

    def clamp_exterior(self, values: np.ndarray) -> np.ndarray:
        return np.where(self.inside, values, self.exterior_value_u)


def _shift(a: np.ndarray, axis: int, step: int, fill) -> np.ndarray:
    """out[i] = a[i + step] along ``axis``; entries shifted in from outside get ``fill``."""
    out = np.empty_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    edge = [slice(None)] * a.ndim
    if step > 0:
        src[axis], dst[axis], edge[axis] = slice(step, None), slice(None, -step), slice(-step, None)
    else:
        src[axis], dst[axis], edge[axis] = slice(None, step), slice(-step, None), slice(None, -step)
    out[tuple(dst)] = a[tuple(src)]
    out[tuple(edge)] = fill
    return out


def _ghost(f: np.ndarray, bc: str):
    if bc == "dirichlet_minus_one":
        return EXTERIOR_VALUE
    if bc == "dirichlet_zero":
        return 0.0
    if bc == "neumann":
        return f
    raise ValueError(f"unknown boundary condition {bc!r}")


def _linear_bc(bc: str) -> str:
    return "dirichlet_zero" if bc == "dirichlet_minus_one" else bc


def neighbor(f: np.ndarray, mask: DomainMask, axis: int, step: int, bc: str) -> np.ndarray:
    """Neighbour values along ``axis``, with ghost values where the neighbour is outside."""
    if mask.is_full:
        if bc == "neumann":
            out = _shift(f, axis, step, 0.0)
            edge = [slice(None)] * f.ndim
            edge[axis] = slice(-1, None) if step > 0 else slice(0, 1)
            out[tuple(edge)] = f[tuple(edge)]
            return out
        return _shift(f, axis, step, _ghost(f, bc))
    return np.where(mask.neighbor_inside[(axis, step)], _shift(f, axis, step, 0.0), _ghost(f, bc))


def second_difference(f: np.ndarray, mask: DomainMask, axis: int, bc: str) -> np.ndarray:
    """Unscaled 3-point second difference along one axis; zero outside."""
    d2 = neighbor(f, mask, axis, 1, bc) + neighbor(f, mask, axis, -1, bc) - 2.0 * f
    return d2 if mask.is_full else np.where(mask.inside, d2, 0.0)


def laplacian_array(f: np.ndarray, mask: DomainMask, bc: str, order: int = 2) -> np.ndarray:
    """Discrete Laplacian on raw arrays.

    ``order=2`` is the (2 dim + 1)-point stencil. ``order=4`` applies the
    correction d2 - (1/12) d2_lin(d2 f) per axis, where d2_lin is the linear
    part of the boundary rule; this keeps the operator's linear part symmetric
    and equal (up to sign) to the gradient of the energy in :func:`grad_sq`.
    """
    h2 = mask.grid.h ** 2
    out = np.zeros_like(f, dtype=float)
    lin = _linear_bc(bc)
    for axis in range(mask.grid.dim):
        d2 = second_difference(f, mask, axis, bc)
        if order == 4:
            d2 = d2 - second_difference(d2, mask, axis, lin) / 12.0
        elif order != 2:
            raise ValueError("stencil order must be 2 or 4")
        out += d2
    return out / h2


def grad_sq_array(f: np.ndarray, mask: DomainMask, bc: str, order: int = 2) -> np.ndarray:
    """Per-cell |grad f|^2 density on raw arrays.

    Face differences are shared half-and-half between the two adjacent cells; a
    face on the container boundary belongs wholly to the inside cell. Summed
    over cells this is exactly <f, -laplacian f> (up to the affine ghost term).
    ``order=4`` adds (h^2/12) (d2 f / h^2)^2 per axis.
    """
    h = mask.grid.h
    out = np.zeros_like(f, dtype=float)
    for axis in range(mask.grid.dim):
        for step in (1, -1):
            diff = neighbor(f, mask, axis, step, bc) - f
            out += mask.boundary_face_weight[(axis, step)] * diff * diff
        if order == 4:
            d2 = second_difference(f, mask, axis, bc)
            out += d2 * d2 / 12.0
        elif order != 2:
            raise ValueError("stencil order must be 2 or 4")
    return np.where(mask.inside, out / (h * h), 0.0)


def div_coeff_grad_array(a: np.ndarray, f: np.ndarray, mask: DomainMask) -> np.ndarray:
    """Flux-form div(a grad f) with arithmetic face averages and zero flux through the container wall."""
    out = np.zeros_like(f, dtype=float)
    for axis in range(mask.grid.dim):
        for step in (1, -1):
            nb_in = mask.neighbor_inside[(axis, step)]
            fa = 0.5 * (a + _shift(a, axis, step, 0.0))
            out += np.where(nb_in, fa * (_shift(f, axis, step, 0.0) - f), 0.0)
    return np.where(mask.inside, out / mask.grid.h**2, 0.0)


def integrate_array(f: np.ndarray, mask: DomainMask) -> float:
    if mask.is_full:
        return float(f.sum()) * mask.grid.cell_volume
    return float(f[mask.inside].sum()) * mask.grid.cell_volume


def inner_product(f: np.ndarray, g: np.ndarray, mask: DomainMask) -> float:
    """Discrete L2 inner product over the container."""
    return integrate_array(f * g, mask)


def l2_norm(f: np.ndarray, mask: DomainMask) -> float:
    return float(np.sqrt(max(inner_product(f, f, mask), 0.0)))


# ScalarField-level API


def laplacian(f: ScalarField, mask: DomainMask, bc: BoundaryCondition, order: int = 2) -> ScalarField:
    mask.check_grid(f)
    return f.with_values(laplacian_array(f.values, mask, bc, order))


def grad_sq(f: ScalarField, mask: DomainMask, bc: BoundaryCondition, order: int = 2) -> ScalarField:
    mask.check_grid(f)
    return f.with_values(grad_sq_array(f.values, mask, bc, order))


def div_coeff_grad(a: ScalarField, f: ScalarField, mask: DomainMask) -> ScalarField:
    mask.check_grid(a, f)
    if np.any(a.values[mask.inside] < 0.0):
        raise ValueError("coefficient field must be nonnegative")
    return f.with_values(div_coeff_grad_array(a.values, f.values, mask))


def integrate(f: ScalarField, mask: DomainMask) -> float:
    """Midpoint rule over the container cells."""
    mask.check_grid(f)
    return integrate_array(f.values, mask)


def constant_field(grid: GridSpec, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def check_resolution(grid: GridSpec, epsilon: float) -> None:
    """Raise if h > eps/2, warn if h > eps/4 (the tanh layer is then under-resolved)."""
    if grid.h > epsilon / 2.0:
        raise ValueError(f"grid spacing h={grid.h:g} exceeds epsilon/2={epsilon / 2:g}")
    if grid.h > epsilon / 4.0 * (1.0 + 1e-12):
        logger.warning("grid spacing h=%g exceeds epsilon/4=%g; interface is under-resolved", grid.h, epsilon / 4)
