"""Diffuse functionals: area, Willmore, connectedness detector, total energy.

Gradients are L2 gradients on the grid: for a functional F and direction v,
``inner_product(grad F, v) = dF(u)[v]``. Energies and gradients share the
same stencils, so the discrete gradients are exact derivatives of the
discrete energies.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .grid import (
    DomainMask,
    ScalarField,
    check_resolution,
    div_coeff_grad_array,
    grad_sq_array,
    integrate_array,
    laplacian_array,
)
from .scalar import (
    CutoffParams,
    c0,
    cutoff_wtilde,
    cutoff_wtilde_prime,
    double_well,
    double_well_prime,
    double_well_second,
)

C0 = c0()
U_BC = "dirichlet_minus_one"
PHI_BC = "neumann"


@dataclass(frozen=True)
class PhaseFieldParams:
    """Model constants.

    ``stencil_order`` selects the Laplacian used for the phase field u (the
    detector field phi always uses the compact flux form).
    """

    epsilon: float
    target_area: float
    sigma: float = 0.1
    cutoff: CutoffParams = field(default_factory=CutoffParams)
    coeff_well: float = 9.0
    coeff_grad: float = 8.0
    stencil_order: int = 4

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0,1)")
        if not self.target_area > 0:
            raise ValueError("target_area must be positive")
        if self.coeff_well < 0 or self.coeff_grad < 0:
            raise ValueError("detector coefficients must be nonnegative")
        if self.stencil_order not in (2, 4):
            raise ValueError("stencil_order must be 2 or 4")

    @property
    def area_weight(self) -> float:
        return self.epsilon ** -(1.0 - self.sigma)

    @property
    def connect_weight(self) -> float:
        return self.epsilon ** -(0.5 - 0.5 * self.sigma)


@dataclass(frozen=True)
class EnergyBreakdown:
    epsilon: float
    willmore: float
    area: float
    area_penalty: float
    baseline: float
    inner_value: float
    connect_penalty: float
    total: float

    @staticmethod
    def columns() -> list[str]:
        return [f.name for f in fields(EnergyBreakdown)]

    def row(self) -> tuple[float, ...]:
        return astuple(self)


# pointwise densities ---------------------------------------------------------


def _check(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> None:
    mask.check_grid(u)
    check_resolution(mask.grid, p.epsilon)


def _mu(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams) -> np.ndarray:
    eps = p.epsilon
    g2 = grad_sq_array(u, mask, U_BC, p.stencil_order)
    return np.where(mask.inside, (0.5 * eps * g2 + double_well(u) / eps) / C0, 0.0)


def _allen_cahn(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams) -> np.ndarray:
    """v = eps lap u - W'(u)/eps on inside cells."""
    eps = p.epsilon
    lap = laplacian_array(u, mask, U_BC, p.stencil_order)
    return np.where(mask.inside, eps * lap - double_well_prime(u) / eps, 0.0)


def mu_density(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> ScalarField:
    """Diffuse area density (1/c0)(eps/2 |grad u|^2 + W(u)/eps)."""
    _check(u, mask, p)
    return u.with_values(_mu(u.values, mask, p))


def alpha_density(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> ScalarField:
    """Diffuse curvature density (1/eps)(eps lap u - W'(u)/eps)^2, without 1/c0."""
    _check(u, mask, p)
    v = _allen_cahn(u.values, mask, p)
    return u.with_values(v * v / p.epsilon)


def discrepancy_density(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> ScalarField:
    _check(u, mask, p)
    eps = p.epsilon
    g2 = grad_sq_array(u.values, mask, U_BC, p.stencil_order)
    return u.with_values(np.where(mask.inside, 0.5 * eps * g2 - double_well(u.values) / eps, 0.0))


# area and Willmore -----------------------------------------------------------


def area_energy(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> float:
    """Modica-Mortola diffuse area S_eps(u)."""
    _check(u, mask, p)
    return integrate_array(_mu(u.values, mask, p), mask)


def willmore_energy(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> float:
    _check(u, mask, p)
    v = _allen_cahn(u.values, mask, p)
    return integrate_array(v * v, mask) / (p.epsilon * C0)


def _grad_area(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams) -> np.ndarray:
    eps = p.epsilon
    lap = laplacian_array(u, mask, U_BC, p.stencil_order)
    return np.where(mask.inside, (-eps * lap + double_well_prime(u) / eps) / C0, 0.0)


def _grad_willmore(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams, v: np.ndarray | None = None) -> np.ndarray:
    eps = p.epsilon
    if v is None:
        v = _allen_cahn(u, mask, p)
    lap_v = laplacian_array(v, mask, "dirichlet_zero", p.stencil_order)
    g = 2.0 / (C0 * eps) * (eps * lap_v - double_well_second(u) * v / eps)
    return np.where(mask.inside, g, 0.0)


def grad_area(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> ScalarField:
    """(1/c0)(-eps lap u + W'(u)/eps)."""
    _check(u, mask, p)
    return u.with_values(_grad_area(u.values, mask, p))


def grad_willmore(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> ScalarField:
    """(2/(c0 eps))(eps lap v - W''(u) v / eps) with v the Allen-Cahn residual."""
    _check(u, mask, p)
    return u.with_values(_grad_willmore(u.values, mask, p))


# connectedness detector ------------------------------------------------------


def smooth_abs(x: float, mu: float) -> float:
    return math.sqrt(x * x + mu * mu) if mu > 0 else abs(x)


def smooth_sign(x: float, mu: float) -> float:
    if mu > 0:
        return x / math.sqrt(x * x + mu * mu)
    return float(np.sign(x))


def smooth_abs_curvature(x: float, mu: float) -> float:
    """Second derivative of smooth_abs (zero for the exact |x| away from 0)."""
    if mu > 0:
        return mu * mu / (x * x + mu * mu) ** 1.5
    return 0.0


def _axis_slice(axis: int, start, stop, dim: int) -> tuple:
    sl = [slice(None)] * dim
    sl[axis] = slice(start, stop)
    return tuple(sl)


class Detector:
    """A_{u,eps}(phi) for a fixed phase field u, with precomputed coefficients.

    ``gamma`` multiplies the first (absolute value) term; ``smoothing`` > 0
    replaces |x| by sqrt(x^2 + smoothing^2).
    """

    def __init__(self, u: np.ndarray, mask: DomainMask, p: PhaseFieldParams):
        self.mask = mask
        self.p = p
        eps = p.epsilon
        lam_bar = p.cutoff.lambda_bar
        inside = mask.inside
        self.wt = np.where(inside, cutoff_wtilde(u, p.cutoff), 0.0)
        self.wt_bar = np.where(inside, cutoff_wtilde(lam_bar * u, p.cutoff), 0.0)
        scale = eps**-1.5
        self.a_well = np.where(inside, p.coeff_well * scale * self.wt_bar + eps, 0.0)
        self.a_grad = np.where(inside, p.coeff_grad * scale * self.wt_bar + eps, 0.0)
        self.source = self.wt / eps
        self.baseline = integrate_array(self.source, mask)
        # face coefficients of the gradient term: arithmetic mean of a_grad on faces
        # between two container cells, divided by h^2 (other faces carry no flux)
        h2 = mask.grid.h**2
        self._faces = []
        for axis in range(mask.grid.dim):
            lo = _axis_slice(axis, 0, -1, mask.grid.dim)
            hi = _axis_slice(axis, 1, None, mask.grid.dim)
            both = inside[lo] & inside[hi]
            self._faces.append(np.where(both, 0.5 * (self.a_grad[lo] + self.a_grad[hi]) / h2, 0.0))

    def _grad_term(self, phi: np.ndarray) -> float:
        total = 0.0
        for axis, c in enumerate(self._faces):
            d = np.diff(phi, axis=axis)
            total += float(np.sum(c * d * d))
        return total * self.mask.grid.cell_volume

    def _div_grad(self, phi: np.ndarray) -> np.ndarray:
        """div(a_grad grad phi) with zero flux through the container wall."""
        dim = self.mask.grid.dim
        out = np.zeros_like(phi)
        for axis, c in enumerate(self._faces):
            flux = c * np.diff(phi, axis=axis)
            out[_axis_slice(axis, 0, -1, dim)] += flux
            out[_axis_slice(axis, 1, None, dim)] -= flux
        return out

    def hessian_matrix(self) -> sp.csr_matrix:
        """Hessian of the smooth part (per unit cell volume) with W'' frozen at its well value 2.

        Symmetric positive definite; rows of outside cells are identity rows.
        """
        grid = self.mask.grid
        idx = np.arange(grid.size).reshape(grid.shape)
        diag = np.where(self.mask.inside, 2.0 * self.a_well, 1.0).ravel()
        rows, cols, vals = [], [], []
        for axis, c in enumerate(self._faces):
            lo = idx[_axis_slice(axis, 0, -1, grid.dim)].ravel()
            hi = idx[_axis_slice(axis, 1, None, grid.dim)].ravel()
            w = 2.0 * c.ravel()
            np.add.at(diag, lo, w)
            np.add.at(diag, hi, w)
            rows += [lo, hi]
            cols += [hi, lo]
            vals += [-w, -w]
        rows.append(np.arange(grid.size))
        cols.append(np.arange(grid.size))
        vals.append(diag)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
        )

    def default_smoothing(self) -> float:
        return 1e-8 * (self.baseline + 1.0)

    def linear_term(self, phi: np.ndarray) -> float:
        return integrate_array(self.source * phi, self.mask)

    def terms(self, phi: np.ndarray) -> tuple[float, float, float]:
        """(signed linear integral, well term, gradient term)."""
        return (
            self.linear_term(phi),
            integrate_array(self.a_well * double_well(phi), self.mask),
            self._grad_term(phi),
        )

    def value(self, phi: np.ndarray, gamma: float = 1.0, smoothing: float = 0.0) -> float:
        lin, well, grad = self.terms(phi)
        return gamma * smooth_abs(lin, smoothing) + well + grad

    def gradient(self, phi: np.ndarray, gamma: float = 1.0, smoothing: float = 0.0, lin: float | None = None) -> np.ndarray:
        if lin is None:
            lin = self.linear_term(phi)
        g = gamma * smooth_sign(lin, smoothing) * self.source
        g = g + self.a_well * double_well_prime(phi)
        g = g - 2.0 * self._div_grad(phi)
        return np.where(self.mask.inside, g, 0.0)

    def value_and_gradient(self, phi: np.ndarray, gamma: float = 1.0, smoothing: float = 0.0):
        lin, well, grad = self.terms(phi)
        value = gamma * smooth_abs(lin, smoothing) + well + grad
        return value, self.gradient(phi, gamma, smoothing, lin)

    def gradient_wrt_u(self, u: np.ndarray, phi: np.ndarray, smoothing: float = 0.0) -> np.ndarray:
        """d/du of A_{u,eps}(phi) - baseline(u) at fixed phi."""
        p = self.p
        eps = p.epsilon
        lam_bar = p.cutoff.lambda_bar
        dwt = cutoff_wtilde_prime(u, p.cutoff)
        dwt_bar = lam_bar * cutoff_wtilde_prime(lam_bar * u, p.cutoff)
        sgn = smooth_sign(self.linear_term(phi), smoothing)
        g2 = grad_sq_array(phi, self.mask, PHI_BC)
        scale = eps**-1.5
        g = sgn * dwt * phi / eps
        g = g + scale * dwt_bar * (p.coeff_well * double_well(phi) + p.coeff_grad * g2)
        g = g - dwt / eps
        return np.where(self.mask.inside, g, 0.0)


def _phi_check(u: ScalarField, phi: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> None:
    _check(u, mask, p)
    mask.check_grid(phi)


def connectedness_functional(
    u: ScalarField, phi: ScalarField, mask: DomainMask, p: PhaseFieldParams, smoothing: float = 0.0
) -> float:
    """A_{u,eps}(phi); ``smoothing`` > 0 evaluates the smoothed variant used for descent."""
    _phi_check(u, phi, mask, p)
    return Detector(u.values, mask, p).value(phi.values, smoothing=smoothing)


def connectedness_baseline(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> float:
    """A_{u,eps}(1) = integral of W~(u)/eps."""
    _check(u, mask, p)
    return Detector(u.values, mask, p).baseline


def grad_connect_wrt_phi(
    u: ScalarField, phi: ScalarField, mask: DomainMask, p: PhaseFieldParams, smoothing: float | None = None
) -> ScalarField:
    _phi_check(u, phi, mask, p)
    det = Detector(u.values, mask, p)
    mu = det.default_smoothing() if smoothing is None else smoothing
    if not mu > 0:
        raise ValueError("smoothing must be positive")
    return phi.with_values(det.gradient(phi.values, smoothing=mu))


# total energy ----------------------------------------------------------------


def contract_tolerance(baseline: float) -> float:
    return 1e-8 * (baseline + 1.0)


def assemble(p: PhaseFieldParams, willmore: float, area: float, baseline: float, inner_value: float) -> EnergyBreakdown:
    area_pen = p.area_weight * (area - p.target_area) ** 2
    connect_pen = p.connect_weight * (baseline - inner_value) ** 2
    return EnergyBreakdown(
        epsilon=p.epsilon,
        willmore=willmore,
        area=area,
        area_penalty=area_pen,
        baseline=baseline,
        inner_value=inner_value,
        connect_penalty=connect_pen,
        total=willmore + area_pen + connect_pen,
    )


def total_energy(u: ScalarField, mask: DomainMask, p: PhaseFieldParams, inner_value: float) -> EnergyBreakdown:
    """E_eps(u) given the detector minimum ``inner_value`` (from the inner solver)."""
    _check(u, mask, p)
    baseline = Detector(u.values, mask, p).baseline
    if inner_value > baseline + contract_tolerance(baseline):
        raise ValueError(
            f"inner value {inner_value:.10g} exceeds the phi=1 baseline {baseline:.10g}; "
            "the inner minimum can never be above A(1)"
        )
    return assemble(p, willmore_energy(u, mask, p), area_energy(u, mask, p), baseline, inner_value)


def frozen_inner_value(det: Detector, phi: np.ndarray, smoothing: float = 0.0) -> float:
    """Best known upper bound for inf A at fixed phi: min(A(phi), A(1))."""
    return min(det.value(phi, smoothing=smoothing), det.baseline)


def frozen_energy(
    u: np.ndarray, phi: np.ndarray, mask: DomainMask, p: PhaseFieldParams, smoothing: float = 0.0, detector: Detector | None = None
) -> EnergyBreakdown:
    """Total energy with inf A replaced by min(A(phi), A(1)) for a fixed phi.

    This is a lower bound for the true energy, since the connectedness
    penalty grows as the inner value falls.
    """
    det = detector if detector is not None else Detector(u, mask, p)
    v = _allen_cahn(u, mask, p)
    willmore = integrate_array(v * v, mask) / (p.epsilon * C0)
    area = integrate_array(_mu(u, mask, p), mask)
    return assemble(p, willmore, area, det.baseline, frozen_inner_value(det, phi, smoothing))


def frozen_gradient(
    u: np.ndarray, phi: np.ndarray, mask: DomainMask, p: PhaseFieldParams, smoothing: float = 0.0, detector: Detector | None = None
) -> np.ndarray:
    """Gradient of :func:`frozen_energy` in u (envelope gradient when phi minimises A)."""
    det = detector if detector is not None else Detector(u, mask, p)
    area = integrate_array(_mu(u, mask, p), mask)
    g = _grad_willmore(u, mask, p)
    g = g + 2.0 * p.area_weight * (area - p.target_area) * _grad_area(u, mask, p)
    gap = det.value(phi, smoothing=smoothing) - det.baseline
    if gap < 0.0:
        g = g + 2.0 * p.connect_weight * gap * det.gradient_wrt_u(u, phi, smoothing)
    return g


def grad_total_wrt_u(
    u: ScalarField, phi_star: ScalarField, mask: DomainMask, p: PhaseFieldParams, smoothing: float = 0.0
) -> ScalarField:
    """Envelope gradient of E_eps holding the inner minimiser ``phi_star`` fixed."""
    _phi_check(u, phi_star, mask, p)
    return u.with_values(frozen_gradient(u.values, phi_star.values, mask, p, smoothing))
