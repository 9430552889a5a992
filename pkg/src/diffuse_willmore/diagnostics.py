"""Oracles and Gamma-convergence measurements: component counts, epsilon sweeps, discrepancy."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energies import EnergyBreakdown, PhaseFieldParams, area_energy, discrepancy_density, total_energy
from .grid import DomainMask, GridSpec, ScalarField, integrate_array
from .inner import InnerSolverConfig, minimize_connectedness
from .scalar import CutoffParams
from .shapes import ShapeSpec, build_recovery, default_delta, RecoveryParams, sharp_area, sharp_willmore
from .topology import count_components, interface_band

logger = logging.getLogger(__name__)

__all__ = ["count_components", "discrepancy", "fit_order", "gamma_sweep", "SweepResult", "SweepRow"]

FITTED_QUANTITIES = ("area_error", "willmore_error", "connect_penalty")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    h: float
    breakdown: EnergyBreakdown
    components: int
    area_error: float
    willmore_error: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    fitted_orders: dict[str, float]
    sharp_area: float
    sharp_willmore: float
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        eps = [r.epsilon for r in self.rows]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("sweep rows must have strictly decreasing epsilon")
        for r in self.rows:
            if r.h > r.epsilon / 4.0:
                raise ValueError(f"row eps={r.epsilon:g} has h={r.h:g} > eps/4")


def discrepancy(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> float:
    """Integral of eps/2 |grad u|^2 - W(u)/eps."""
    return integrate_array(discrepancy_density(u, mask, p).values, mask)


def fit_order(epsilons: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log|error| against log eps; needs >= 3 nonzero errors."""
    e = np.asarray(epsilons, float)
    err = np.abs(np.asarray(errors, float))
    keep = err > 0
    if keep.sum() < 3:
        raise ValueError("order fit needs at least 3 epsilon values with nonzero error")
    slope, _ = np.polyfit(np.log(e[keep]), np.log(err[keep]), 1)
    return float(slope)


def _band_touches_wall(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> bool:
    band = interface_band(u.values, mask, p)
    wall = np.zeros_like(band)
    for axis in range(mask.grid.dim):
        for step in (1, -1):
            wall |= mask.inside & ~mask.neighbor_inside[(axis, step)]
    return bool(np.any(band & wall))


def _sweep_row(
    shape: ShapeSpec,
    eps: float,
    lower,
    upper,
    h_factor: float,
    sigma: float,
    container: Callable[[GridSpec], DomainMask] | None,
    inner_cfg: InnerSolverConfig,
    target: float,
    s_sharp: float,
    w_sharp: float,
    max_cells: int,
    cutoff: CutoffParams | None,
) -> tuple[SweepRow | None, str | None]:
    grid = GridSpec.from_box(lower, upper, h_factor * eps)
    if grid.size > max_cells:
        return None, f"eps={eps:g}: {grid.size} cells exceed the budget of {max_cells}"
    mask = container(grid) if container is not None else DomainMask.full(grid)
    p = PhaseFieldParams(eps, target, sigma=sigma, cutoff=cutoff or CutoffParams())
    delta = shape.delta if shape.delta is not None else default_delta(shape, grid, mask)
    try:
        u = build_recovery(shape, grid, mask, RecoveryParams(eps, delta, sigma))
    except ValueError as exc:
        return None, f"eps={eps:g}: skipped, {exc}"
    if _band_touches_wall(u, mask, p):
        return None, f"eps={eps:g}: skipped, the interface band reaches the container wall"
    inner = minimize_connectedness(u, mask, p, inner_cfg)
    breakdown = total_energy(u, mask, p, inner.value)
    row = SweepRow(
        epsilon=eps,
        h=grid.h,
        breakdown=breakdown,
        components=count_components(u, mask, p),
        area_error=abs(breakdown.area - s_sharp),
        willmore_error=abs(breakdown.willmore - w_sharp),
    )
    logger.info("sweep eps=%g: S=%.8g W=%.8g components=%d", eps, breakdown.area, breakdown.willmore, row.components)
    return row, None


def gamma_sweep(
    shape: ShapeSpec,
    epsilons: Sequence[float],
    lower: Sequence[float],
    upper: Sequence[float],
    *,
    sigma: float = 0.1,
    h_factor: float = 0.2,
    target_area: float | None = None,
    container: Callable[[GridSpec], DomainMask] | None = None,
    inner_cfg: InnerSolverConfig | None = None,
    cutoff: CutoffParams | None = None,
    max_cells: int = 20_000_000,
    threads: int = 1,
) -> SweepResult:
    """Recovery fields of ``shape`` for each eps, their energies and fitted convergence orders.

    The grid for each eps covers [lower, upper] with h = h_factor * eps
    (``container`` builds the mask, default the full box). ``target_area``
    defaults to the sharp area. Rows whose band leaves the container or whose
    grid exceeds ``max_cells`` are skipped with a note.
    """
    eps_sorted = sorted((float(e) for e in epsilons), reverse=True)
    if len(set(eps_sorted)) != len(eps_sorted):
        raise ValueError("epsilon values must be distinct")
    if not 0 < h_factor <= 0.25:
        raise ValueError("h_factor must lie in (0, 1/4]")
    inner_cfg = inner_cfg or InnerSolverConfig()
    s_sharp = sharp_area(shape)
    w_sharp = sharp_willmore(shape)
    target = s_sharp if target_area is None else float(target_area)

    def work(eps):
        return _sweep_row(
            shape, eps, lower, upper, h_factor, sigma, container, inner_cfg, target, s_sharp, w_sharp, max_cells, cutoff
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, eps_sorted))
    else:
        outcomes = [work(e) for e in eps_sorted]

    rows = [r for r, _ in outcomes if r is not None]
    notes = [n for _, n in outcomes if n is not None]
    orders: dict[str, float] = {}
    for name in FITTED_QUANTITIES:
        values = [r.breakdown.connect_penalty if name == "connect_penalty" else getattr(r, name) for r in rows]
        try:
            orders[name] = fit_order([r.epsilon for r in rows], values)
        except ValueError as exc:
            orders[name] = math.nan
            notes.append(f"{name}: {exc}")
    return SweepResult(rows, orders, s_sharp, w_sharp, notes)


def diffuse_area(u: ScalarField, mask: DomainMask, epsilon: float, sigma: float = 0.1) -> float:
    """S_eps(u) without a target area (convenience for oracles)."""
    return area_energy(u, mask, PhaseFieldParams(epsilon, 1.0, sigma=sigma))
