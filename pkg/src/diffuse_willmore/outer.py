"""L2 gradient flow of the total energy in u, with the inner problem re-solved on a schedule.

Between refreshes the detector field phi* is frozen and the Armijo test uses
the frozen energy (see :func:`energies.frozen_energy`). The flow keeps the
exterior cells at -1 after every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
import scipy.fft
import scipy.sparse.linalg as spla

from .energies import (
    C0,
    Detector,
    EnergyBreakdown,
    PhaseFieldParams,
    assemble,
    frozen_energy,
    frozen_gradient,
)
from .grid import DomainMask, ScalarField, check_resolution, inner_product, l2_norm, laplacian_array
from .inner import InnerResult, InnerSolverConfig, minimize_connectedness
from .report import SolverError, SolverReport

logger = logging.getLogger(__name__)

Scheme = Literal["explicit", "semi_implicit"]


@dataclass(frozen=True)
class OuterSolverConfig:
    max_steps: int = 200
    dt0: float = 1e-6
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    growth: float = 2.0
    inner_refresh: int = 5
    stop_tol: float = 1e-9
    scheme: Scheme = "semi_implicit"
    implicit_weight: float = 1.0  # c in (I + dt c (2/(c0 eps)) eps^2 Lap^2)
    cg_tol: float = 1e-8
    min_dt: float = 1e-30
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if not (self.dt0 > 0 and math.isfinite(self.dt0)):
            raise ValueError("dt0 must be positive")
        if self.inner_refresh < 1:
            raise ValueError("inner_refresh must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ValueError("scheme must be 'explicit' or 'semi_implicit'")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0,1)")
        if self.growth < 1:
            raise ValueError("growth factor must be >= 1")
        if self.implicit_weight < 0:
            raise ValueError("implicit_weight must be >= 0")


@dataclass
class StepResult:
    u_next: ScalarField
    dt_used: float
    energy_next: EnergyBreakdown


@dataclass
class EvolveResult:
    u_star: ScalarField
    trace: list[EnergyBreakdown]
    report: SolverReport
    phi_star: ScalarField | None = None
    refreshes: list[int] = field(default_factory=list)


class BiharmonicPreconditioner:
    """Applies (I + tau Lap0^2)^-1, Lap0 the 2nd-order Laplacian with zero ghosts.

    On a full box Lap0 is diagonalised by the type-I sine transform, so the
    inverse is exact; on other containers the box inverse preconditions a
    conjugate-gradient solve of the masked operator.
    """

    def __init__(self, mask: DomainMask, cg_tol: float = 1e-8):
        self.mask = mask
        self.cg_tol = cg_tol
        grid = mask.grid
        eig = 0.0
        for axis, n in enumerate(grid.shape):
            k = np.arange(1, n + 1)
            lam = -4.0 / grid.h**2 * np.sin(np.pi * k / (2.0 * (n + 1))) ** 2
            shape = [1] * grid.dim
            shape[axis] = n
            eig = eig + lam.reshape(shape)
        self.eig = eig
        self.cg_iterations = 0

    def _box_inverse(self, r: np.ndarray, tau: float) -> np.ndarray:
        coef = scipy.fft.dstn(r, type=1)
        coef /= 1.0 + tau * self.eig**2
        return scipy.fft.idstn(coef, type=1)

    def solve(self, r: np.ndarray, tau: float) -> np.ndarray:
        if tau == 0.0:
            return r.copy()
        mask = self.mask
        if mask.is_full:
            return self._box_inverse(r, tau)
        shape = mask.grid.shape
        inside = mask.inside

        def apply(x):
            x = np.where(inside, x.reshape(shape), 0.0)
            lx = laplacian_array(x, mask, "dirichlet_zero")
            return (x + tau * laplacian_array(lx, mask, "dirichlet_zero")).ravel()

        def precond(x):
            y = self._box_inverse(np.where(inside, x.reshape(shape), 0.0), tau)
            return np.where(inside, y, 0.0).ravel()

        n = mask.grid.size
        a_op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
        m_op = spla.LinearOperator((n, n), matvec=precond, dtype=float)
        counter = [0]

        def cb(_):
            counter[0] += 1

        x, info = spla.cg(a_op, np.where(inside, r, 0.0).ravel(), rtol=self.cg_tol, atol=0.0, M=m_op, maxiter=500, callback=cb)
        self.cg_iterations += counter[0]
        if info != 0:
            raise SolverError(f"semi-implicit CG did not reach tolerance {self.cg_tol:g} (info={info})")
        return np.where(inside, x.reshape(shape), 0.0)


def _direction(g: np.ndarray, dt: float, p: PhaseFieldParams, cfg: OuterSolverConfig, pre: BiharmonicPreconditioner | None):
    if cfg.scheme == "explicit" or pre is None:
        return g
    # the eps Lap (eps Lap u) part of the Willmore gradient carries the factor 2/(c0 eps)
    tau = dt * cfg.implicit_weight * 2.0 * p.epsilon / C0
    return pre.solve(g, tau)


def _frozen(u: np.ndarray, phi: np.ndarray, mask: DomainMask, p: PhaseFieldParams):
    det = Detector(u, mask, p)
    return frozen_energy(u, phi, mask, p, detector=det), det


def _line_search(u, phi, e0, g, dt, mask, p, cfg, pre):
    """Backtrack from dt until Armijo holds. Returns (u_next, dt, energy, backtracked) or None."""
    backtracked = False
    while dt >= cfg.min_dt:
        d = _direction(g, dt, p, cfg, pre)
        slope = inner_product(g, d, mask)
        trial = mask.clamp_exterior(u - dt * d)
        try:
            e1, _ = _frozen(trial, phi, mask, p)
            ok = math.isfinite(e1.total) and e1.total <= e0.total - cfg.armijo_c * dt * slope
        except FloatingPointError:
            ok = False
        if ok:
            return trial, dt, e1, backtracked
        dt *= cfg.backtrack
        backtracked = True
    return None


def outer_step(
    u: ScalarField,
    phi_star: ScalarField,
    mask: DomainMask,
    p: PhaseFieldParams,
    cfg: OuterSolverConfig | None = None,
    dt: float | None = None,
) -> StepResult:
    """One Armijo-accepted step of the frozen-phi flow starting from ``dt`` (default dt0)."""
    cfg = cfg or OuterSolverConfig()
    mask.check_grid(u, phi_star)
    dt = cfg.dt0 if dt is None else dt
    uv = u.values
    e0, det = _frozen(uv, phi_star.values, mask, p)
    g = frozen_gradient(uv, phi_star.values, mask, p, detector=det)
    if not np.any(g):
        return StepResult(u, dt, e0)
    pre = BiharmonicPreconditioner(mask, cfg.cg_tol) if cfg.scheme == "semi_implicit" else None
    found = _line_search(uv, phi_star.values, e0, g, dt, mask, p, cfg, pre)
    if found is None:
        raise SolverError(
            f"step size underflow (dt < {cfg.min_dt:g}) before any accepted step; "
            "the problem is too stiff for this scheme, try scheme=semi_implicit"
        )
    u_next, dt_used, e1, _ = found
    return StepResult(u.with_values(u_next), dt_used, e1)


def _refresh(u: np.ndarray, grid, mask, p, inner_cfg, phi) -> InnerResult:
    warm = ScalarField(grid, phi) if phi is not None else None
    return minimize_connectedness(ScalarField(grid, u), mask, p, inner_cfg, warm_start=warm)


def evolve(
    u0: ScalarField,
    mask: DomainMask,
    p: PhaseFieldParams,
    cfg: OuterSolverConfig | None = None,
    inner_cfg: InnerSolverConfig | None = None,
    checkpoint: Callable[[int, ScalarField], None] | None = None,
) -> EvolveResult:
    """Gradient flow of E_eps from ``u0``.

    The trace holds one breakdown per accepted step (index 0 is ``u0``).
    Entries between refreshes use the frozen phi*; at a refresh the entry
    uses the new inner minimum. Because a lower inner value means a larger
    connectedness penalty, a refresh can raise the recorded total; such
    rises are logged in the report notes.
    """
    cfg = cfg or OuterSolverConfig()
    inner_cfg = inner_cfg or InnerSolverConfig()
    mask.check_grid(u0)
    grid = u0.grid
    check_resolution(grid, p.epsilon)
    outside = ~mask.inside
    if np.any(u0.values[outside] != mask.exterior_value_u):
        raise ValueError("u0 must equal -1 on every cell outside the container")

    report = SolverReport()
    pre = BiharmonicPreconditioner(mask, cfg.cg_tol) if cfg.scheme == "semi_implicit" else None
    u = u0.values.copy()

    inner = _refresh(u, grid, mask, p, inner_cfg, None)
    phi = inner.phi_star.values
    refreshes = [0]
    report.notes.extend(inner.report.notes)
    e, det = _frozen(u, phi, mask, p)
    e = assemble(p, e.willmore, e.area, inner.baseline, inner.value)
    trace = [e]
    dt = cfg.dt0
    accepted = 0
    report.termination = "max_steps"

    for step in range(cfg.max_steps):
        g = frozen_gradient(u, phi, mask, p, detector=det)
        g_norm = l2_norm(g, mask)
        report.record(step, 1.0, e.total, g_norm, dt)
        if g_norm == 0.0:
            vals = u[mask.inside]
            trivial = bool(np.all(vals == -1.0) or np.all(vals == 1.0))
            report.termination = "zero gradient at trivial state" if trivial else "zero gradient"
            logger.info("flow stalled: %s", report.termination)
            break
        found = _line_search(u, phi, e, g, dt, mask, p, cfg, pre)
        if found is None:
            if accepted == 0:
                raise SolverError(
                    f"step size underflow (dt < {cfg.min_dt:g}) before any accepted step; "
                    "the problem is too stiff for this scheme, try scheme=semi_implicit",
                    report,
                )
            report.termination = "dt underflow"
            break
        u, dt_used, e_new, backtracked = found
        accepted += 1
        assert np.all(u[outside] == mask.exterior_value_u)
        det = Detector(u, mask, p)
        if accepted % cfg.inner_refresh == 0:
            inner = _refresh(u, grid, mask, p, inner_cfg, phi)
            phi = inner.phi_star.values
            refreshes.append(accepted)
            refreshed = assemble(p, e_new.willmore, e_new.area, inner.baseline, inner.value)
            if refreshed.total > e_new.total:
                report.notes.append(
                    f"refresh at step {accepted} raised the total from {e_new.total:.12g} to {refreshed.total:.12g}"
                )
            e_new = refreshed
        decrease = e.total - e_new.total
        e = e_new
        trace.append(e)
        if checkpoint is not None and cfg.checkpoint_every and accepted % cfg.checkpoint_every == 0:
            checkpoint(accepted, ScalarField(grid, u))
        dt = dt_used if backtracked else dt_used * cfg.growth
        if 0.0 <= decrease <= cfg.stop_tol * abs(e.total):
            report.termination = "stop_tol"
            break
    else:
        report.record(cfg.max_steps, 1.0, e.total, l2_norm(frozen_gradient(u, phi, mask, p, detector=det), mask), dt)

    return EvolveResult(ScalarField(grid, u), trace, report, ScalarField(grid, phi), refreshes)
