"""Scalar functions of the phase-field model.

The double well W(r) = (1 - r^2)^2 / 4, its optimal profile q(r) = tanh(r / sqrt 2),
the plateau cutoff used by the connectedness detector and the normalisation
constants c0 and c~0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

SQRT2 = math.sqrt(2.0)
C0_EXACT = 2.0 * SQRT2 / 3.0


def double_well(r):
    """W(r) = (1 - r^2)^2 / 4."""
    return 0.25 * (1.0 - r * r) ** 2


def double_well_prime(r):
    return r * r * r - r


def double_well_second(r):
    return 3.0 * r * r - 1.0


def optimal_profile(r):
    """Heteroclinic solution of -q'' + W'(q) = 0 with q(0) = 0, q(+-inf) = +-1."""
    return np.tanh(np.asarray(r, dtype=float) / SQRT2)


def optimal_profile_prime(r):
    q = optimal_profile(r)
    return (1.0 - q * q) / SQRT2


def profile_inverse(y):
    """Inverse of :func:`optimal_profile`, defined for |y| < 1."""
    y = np.asarray(y, dtype=float)
    if np.any(~(np.abs(y) < 1.0)):
        raise ValueError("profile_inverse is only defined for |y| < 1")
    out = SQRT2 * np.arctanh(y)
    return float(out) if out.ndim == 0 else out


def smoothstep5(t):
    """C^2 quintic ramp 10t^3 - 15t^4 + 6t^5, clamped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep5_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc * tc * (1.0 - tc) ** 2, 0.0)


@dataclass(frozen=True)
class CutoffParams:
    """Parameters of the plateau cutoff W~.

    ``lambda_bar`` defaults to (1 - lambda)^(1/4). Any value in
    (sqrt(1 - lambda), 1) keeps the support edge of W~ below 1 *and* makes
    W~(lambda_bar * u) vanish near u = +-1, so the detector has a dead zone.
    """

    lam: float = 1.0 / 61.0
    lambda_bar: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0,1)")
        if self.lambda_bar is None:
            object.__setattr__(self, "lambda_bar", (1.0 - self.lam) ** 0.25)
        if not 0.0 < self.lambda_bar < 1.0:
            raise ValueError("lambda_bar must lie in (0,1)")
        if not self.outer_edge < 1.0:
            raise ValueError("lambda_bar^-1 (1 - lambda) must be < 1")

    @property
    def inner_edge(self) -> float:
        """|s| up to which W~(s) = 1."""
        return 1.0 - self.lam

    @property
    def outer_edge(self) -> float:
        """|s| beyond which W~(s) = 0."""
        return (1.0 - self.lam) / self.lambda_bar


def cutoff_wtilde(s, p: CutoffParams):
    """Even plateau function: 1 on |s| <= 1-lambda, 0 on |s| >= (1-lambda)/lambda_bar."""
    t = (np.abs(s) - p.inner_edge) / (p.outer_edge - p.inner_edge)
    return 1.0 - smoothstep5(t)


def cutoff_wtilde_prime(s, p: CutoffParams):
    width = p.outer_edge - p.inner_edge
    t = (np.abs(s) - p.inner_edge) / width
    return -np.sign(s) * smoothstep5_prime(t) / width


def composite_simpson(f: Callable, a: float, b: float, panels: int) -> float:
    if panels < 1:
        raise ValueError("panels must be >= 1")
    x = np.linspace(a, b, 2 * panels + 1)
    y = f(x)
    hh = (b - a) / (2 * panels)
    return float(hh / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def adaptive_simpson(f: Callable, a: float, b: float, tol: float = 1e-10, max_depth: int = 50) -> float:
    """Recursive adaptive Simpson quadrature with absolute tolerance ``tol``."""

    def simpson(fa, fm, fb, a_, b_):
        return (b_ - a_) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a_, b_, fa, fm, fb, whole, tol_, depth):
        m = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m), 0.5 * (m + b_)
        flm, frm = float(f(lm)), float(f(rm))
        left = simpson(fa, flm, fm, a_, m)
        right = simpson(fm, frm, fb, m, b_)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol_:
            return left + right + delta / 15.0
        return recurse(a_, m, fa, flm, fm, left, tol_ / 2.0, depth - 1) + recurse(
            m, b_, fm, frm, fb, right, tol_ / 2.0, depth - 1
        )

    fa, fb = float(f(a)), float(f(b))
    fm = float(f(0.5 * (a + b)))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def _c0_integrand(s):
    return np.sqrt(2.0 * double_well(s))


def c0(tol: float = 1e-10) -> float:
    """Modica-Mortola constant: integral of sqrt(2 W) over [-1, 1]."""
    return adaptive_simpson(_c0_integrand, -1.0, 1.0, tol)


def plateau_halfwidth(p: CutoffParams) -> float:
    """r(1) = q^-1(1 - lambda): half-width of the region where W~(q) = 1."""
    return profile_inverse(p.inner_edge)


def support_halfwidth(p: CutoffParams) -> float:
    """Half-width of the support of r -> W~(q(r))."""
    return profile_inverse(p.outer_edge)


def c_tilde0(p: CutoffParams, tol: float = 1e-10) -> float:
    """Integral of W~(q(r)) over its full support.

    The plateau (-r(1), r(1)) contributes exactly 2 r(1); the two transition
    tails are integrated adaptively.
    """
    r1 = plateau_halfwidth(p)
    r2 = support_halfwidth(p)
    tail = adaptive_simpson(lambda r: cutoff_wtilde(optimal_profile(r), p), r1, r2, tol / 2.0)
    return 2.0 * r1 + 2.0 * tail


def c_tilde0_plateau(p: CutoffParams) -> float:
    """Plateau-only value 2 r(1), the integral over (-r(1), r(1))."""
    return 2.0 * plateau_halfwidth(p)


def fd_second_derivative(f: Callable, r, k0: float = 0.2, levels: int = 4):
    """Central second difference of f, Richardson-extrapolated over steps k0, k0/2, ..."""
    r = np.asarray(r, dtype=float)

    def d2(k):
        return (f(r + k) - 2.0 * f(r) + f(r - k)) / (k * k)

    table = [d2(k0 / 2**j) for j in range(levels)]
    for m in range(1, levels):
        table = [(4**m * table[j + 1] - table[j]) / (4**m - 1) for j in range(len(table) - 1)]
    return table[0]


def profile_residuals(samples: int = 1000, lo: float = -10.0, hi: float = 10.0):
    """(r, |-q'' + W'(q)| with finite-difference q'', |q' - sqrt(2 W(q))|) on an even sample grid."""
    r = np.linspace(lo, hi, samples)
    q = optimal_profile(r)
    ode = np.abs(-fd_second_derivative(optimal_profile, r) + double_well_prime(q))
    first = np.abs(optimal_profile_prime(r) - np.sqrt(2.0 * double_well(q)))
    return r, ode, first
