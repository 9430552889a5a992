"""Analytic test geometries and the optimal-profile recovery fields built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import integrate as spi

from .grid import DomainMask, GridSpec, ScalarField
from .scalar import optimal_profile, smoothstep5


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def sdf(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(xs, self.center)))
        return self.radius - r

    def bounding_radius(self) -> float:
        return self.radius

    def half_extent(self) -> np.ndarray:
        return np.full(self.dim, self.radius)

    def min_feature(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipse (2D) or ellipsoid (3D).

    The signed distance is the first-order estimate (1 - k) k / |x / a^2| with
    k = |x / a|, i.e. the normalised level function divided by its gradient
    norm. It is exact for balls and has |grad d| = 1 on the interface.
    """

    center: tuple[float, ...]
    semi_axes: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        if len(self.center) != len(self.semi_axes):
            raise ValueError("ellipsoid center and semi_axes differ in length")
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def sdf(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        y = [x - c for x, c in zip(xs, self.center)]
        k = np.sqrt(sum((yi / a) ** 2 for yi, a in zip(y, self.semi_axes)))
        g = np.sqrt(sum((yi / a**2) ** 2 for yi, a in zip(y, self.semi_axes)))
        tiny = np.finfo(float).tiny
        # k / g tends to a value in [min a, max a] at the centre
        ratio = np.where(g > tiny, k / np.maximum(g, tiny), min(self.semi_axes))
        return (1.0 - k) * ratio

    def bounding_radius(self) -> float:
        return max(self.semi_axes)

    def half_extent(self) -> np.ndarray:
        return np.asarray(self.semi_axes)

    def min_feature(self) -> float:
        return min(self.semi_axes)


@dataclass(frozen=True)
class Torus:
    """Torus around the z axis through ``center`` (3D only)."""

    center: tuple[float, float, float]
    major: float
    minor: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("a torus needs a 3D center")
        if not 0 < self.minor < self.major:
            raise ValueError("torus radii must satisfy 0 < minor < major")

    dim = 3

    def sdf(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        x, y, z = (xi - c for xi, c in zip(xs, self.center))
        ring = np.sqrt(x * x + y * y) - self.major
        return self.minor - np.sqrt(ring * ring + z * z)

    def bounding_radius(self) -> float:
        return self.major + self.minor

    def half_extent(self) -> np.ndarray:
        return np.array([self.major + self.minor, self.major + self.minor, self.minor])

    def min_feature(self) -> float:
        return self.minor


Primitive = Union[Ball, Ellipsoid, Torus]


@dataclass(frozen=True)
class ShapeSpec:
    """Disjoint union of primitives; ``delta`` optionally fixes the recovery band half-width."""

    primitives: tuple[Primitive, ...]
    delta: float | None = None

    def __post_init__(self) -> None:
        prims = tuple(self.primitives)
        object.__setattr__(self, "primitives", prims)
        if not prims:
            raise ValueError("shape needs at least one primitive")
        dims = {p.dim for p in prims}
        if len(dims) != 1:
            raise ValueError("all primitives must have the same dimension")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        gap = self.min_gap()
        if gap <= 0:
            raise ValueError("primitives must be pairwise disjoint")
        if self.delta is not None and gap < 2 * self.delta:
            raise ValueError(f"primitive clearance {gap:g} is below the band width 2*delta={2 * self.delta:g}")

    @property
    def dim(self) -> int:
        return self.primitives[0].dim

    def sdf(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        return np.maximum.reduce([np.broadcast_to(p.sdf(xs), np.broadcast(*xs).shape) for p in self.primitives])

    def min_gap(self) -> float:
        """Lower bound of the pairwise distances (bounding spheres unless both are balls)."""
        gap = math.inf
        for i, a in enumerate(self.primitives):
            for b in self.primitives[i + 1 :]:
                dist = math.dist(a.center, b.center)
                gap = min(gap, dist - a.bounding_radius() - b.bounding_radius())
        return gap


def signed_distance(shape: ShapeSpec, x) -> np.ndarray | float:
    """Signed distance to the union boundary, positive inside.

    ``x`` is a point (length ``dim``) or an array of points with the coordinate
    in the last axis.
    """
    x = np.asarray(x, dtype=float)
    xs = [x[..., k] for k in range(shape.dim)]
    d = shape.sdf(xs)
    return float(d) if np.ndim(d) == 0 else d


def wall_distance(shape: ShapeSpec, grid: GridSpec, mask: DomainMask | None = None) -> float:
    """Smallest distance from a primitive's bounding box to the grid walls."""
    lower = np.asarray(grid.origin)
    upper = np.asarray(grid.upper)
    best = math.inf
    for p in shape.primitives:
        c = np.asarray(p.center)
        ext = p.half_extent()
        best = min(best, float(np.min(c - ext - lower)), float(np.min(upper - c - ext)))
    if mask is not None and not mask.is_full:
        # sample the container wall: outside cells that touch inside cells
        xs = grid.centers()
        d = shape.sdf(xs)
        edge = ~mask.inside
        if edge.any():
            best = min(best, float(-np.max(np.broadcast_to(d, grid.shape)[edge])))
    return best


def default_delta(shape: ShapeSpec, grid: GridSpec, mask: DomainMask | None = None) -> float:
    """Half the smallest clearance (feature size, pairwise gap, wall distance), capped at a quarter of the box."""
    clearance = min(min(p.min_feature() for p in shape.primitives), shape.min_gap(), wall_distance(shape, grid, mask))
    side = min(n * grid.h for n in grid.cells_per_axis)
    return min(0.5 * clearance, 0.25 * side)


@dataclass(frozen=True)
class RecoveryParams:
    epsilon: float
    delta: float
    sigma: float = 0.1

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0,1)")
        core = self.epsilon ** (1.0 - self.sigma / 2.0)
        if not core < self.delta / 2.0:
            raise ValueError(
                f"recovery needs eps^(1-sigma/2)={core:.4g} < delta/2={self.delta / 2:.4g}; "
                "decrease epsilon or increase delta"
            )


def eta_cutoff(r):
    """Even cut-off: 1 on [-1, 1], 0 for |r| >= 2, quintic smoothstep between."""
    return 1.0 - smoothstep5(np.abs(r) - 1.0)


def q_eps(r, p: RecoveryParams):
    """eta(2r/delta) q(r/eps) + sgn(r) (1 - eta(2r/delta))."""
    r = np.asarray(r, dtype=float)
    e = eta_cutoff(2.0 * r / p.delta)
    out = e * optimal_profile(r / p.epsilon) + np.sign(r) * (1.0 - e)
    return float(out) if out.ndim == 0 else out


def build_recovery(shape: ShapeSpec, grid: GridSpec, mask: DomainMask, p: RecoveryParams) -> ScalarField:
    """u(x) = q_eps(d(x)) at the cell centres, -1 outside the container.

    Raises if the set {d > -delta}, where u differs from -1, is not contained
    in the container (checked on outside cells and the ghost layer).
    """
    if shape.dim != grid.dim:
        raise ValueError("shape and grid dimensions differ")
    if mask.grid != grid:
        raise ValueError("mask and grid differ")
    d = np.broadcast_to(shape.sdf(grid.centers()), grid.shape)
    ghost = grid.ghost_ring_centers()
    d_ghost = shape.sdf([ghost[:, k] for k in range(grid.dim)])
    outside_max = max(float(np.max(d_ghost)), float(np.max(d[~mask.inside], initial=-math.inf)))
    if outside_max > -p.delta:
        raise ValueError(
            f"recovery band leaves the container: signed distance {outside_max:.4g} > -delta={-p.delta:.4g} outside"
        )
    u = q_eps(d, p)
    return ScalarField(grid, mask.clamp_exterior(u))


def recovery_for(shape: ShapeSpec, grid: GridSpec, mask: DomainMask, epsilon: float, sigma: float = 0.1) -> ScalarField:
    """Recovery field with the shape's declared delta, or the default band width."""
    delta = shape.delta if shape.delta is not None else default_delta(shape, grid, mask)
    return build_recovery(shape, grid, mask, RecoveryParams(epsilon, delta, sigma))


# sharp-interface reference values


def _ellipse_perimeter_and_willmore(a: float, b: float) -> tuple[float, float]:
    def speed(t):
        return math.hypot(a * math.sin(t), b * math.cos(t))

    def kappa2_ds(t):
        s = speed(t)
        return (a * b) ** 2 / s**5

    per = spi.quad(speed, 0, 2 * math.pi, epsabs=1e-13, limit=200)[0]
    will = spi.quad(kappa2_ds, 0, 2 * math.pi, epsabs=1e-13, limit=200)[0]
    return per, will


def _ellipsoid_area_and_willmore(a: float, b: float, c: float) -> tuple[float, float]:
    def integrands(theta, phi):
        st, ct, sp, cp = math.sin(theta), math.cos(theta), math.sin(phi), math.cos(phi)
        x = np.array([a * st * cp, b * st * sp, c * ct])
        xt = np.array([a * ct * cp, b * ct * sp, -c * st])
        xp = np.array([-a * st * sp, b * st * cp, 0.0])
        n = np.cross(xt, xp)
        dA = np.linalg.norm(n)
        # mean curvature of the ellipsoid level set f = sum (x_i/a_i)^2
        ax = np.array([a, b, c])
        grad = 2 * x / ax**2
        hess = np.diag(2 / ax**2)
        g = np.linalg.norm(grad)
        H = (np.trace(hess) - grad @ hess @ grad / g**2) / g
        return dA, H * H * dA

    area = spi.dblquad(lambda p, t: integrands(t, p)[0], 0, math.pi, 0, 2 * math.pi, epsabs=1e-10)[0]
    will = spi.dblquad(lambda p, t: integrands(t, p)[1], 0, math.pi, 0, 2 * math.pi, epsabs=1e-10)[0]
    return area, will


def sharp_area(shape: ShapeSpec) -> float:
    """Perimeter (2D) or surface area (3D) of the union."""
    return sum(_sharp(p)[0] for p in shape.primitives)


def sharp_willmore(shape: ShapeSpec) -> float:
    """Integral of the squared mean curvature (sum of principal curvatures)."""
    return sum(_sharp(p)[1] for p in shape.primitives)


def _sharp(p: Primitive) -> tuple[float, float]:
    if isinstance(p, Ball):
        if p.dim == 2:
            return 2 * math.pi * p.radius, 2 * math.pi / p.radius
        return 4 * math.pi * p.radius**2, 16 * math.pi
    if isinstance(p, Ellipsoid):
        if p.dim == 2:
            return _ellipse_perimeter_and_willmore(*p.semi_axes)
        return _ellipsoid_area_and_willmore(*p.semi_axes)
    if isinstance(p, Torus):
        R, r = p.major, p.minor
        area = 4 * math.pi**2 * R * r

        def h2_da(t):
            rho = R + r * math.cos(t)
            H = 1 / r + math.cos(t) / rho
            return H * H * rho * r * 2 * math.pi

        return area, spi.quad(h2_da, 0, 2 * math.pi, epsabs=1e-12)[0]
    raise TypeError(f"unknown primitive {p!r}")
