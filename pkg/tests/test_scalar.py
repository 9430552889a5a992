import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from diffuse_willmore import scalar
from diffuse_willmore.scalar import (
    C0_EXACT,
    CutoffParams,
    adaptive_simpson,
    c0,
    c_tilde0,
    c_tilde0_plateau,
    composite_simpson,
    cutoff_wtilde,
    cutoff_wtilde_prime,
    double_well,
    double_well_prime,
    double_well_second,
    fd_second_derivative,
    optimal_profile,
    optimal_profile_prime,
    plateau_halfwidth,
    profile_inverse,
    profile_residuals,
    smoothstep5,
    smoothstep5_prime,
    support_halfwidth,
)


def test_double_well_values():
    assert double_well(0.0) == pytest.approx(0.25)
    assert double_well(1.0) == 0.0 and double_well(-1.0) == 0.0
    r = np.linspace(-2, 2, 41)
    assert np.allclose(double_well_prime(r), r**3 - r)
    assert np.allclose(double_well_second(r), 3 * r**2 - 1)


def test_double_well_derivatives_match_differences():
    r = np.linspace(-1.7, 1.7, 23)
    k = 1e-6
    assert np.allclose((double_well(r + k) - double_well(r - k)) / (2 * k), double_well_prime(r), atol=1e-8)
    assert np.allclose((double_well_prime(r + k) - double_well_prime(r - k)) / (2 * k), double_well_second(r), atol=1e-7)


def test_profile_solves_ode_and_first_integral():
    _, ode, first = profile_residuals()
    assert ode.max() < 1e-10
    assert first.max() < 1e-10


def test_profile_symmetry_and_limits():
    r = np.linspace(0, 8, 17)
    assert np.allclose(optimal_profile(-r), -optimal_profile(r))
    assert optimal_profile(0.0) == 0.0
    assert optimal_profile_prime(0.0) == pytest.approx(1 / math.sqrt(2))
    assert abs(optimal_profile(40.0) - 1.0) < 1e-15


@given(st.floats(min_value=-0.999999, max_value=0.999999))
def test_profile_inverse_roundtrip(y):
    assert optimal_profile(profile_inverse(y)) == pytest.approx(y, abs=1e-12)


@pytest.mark.parametrize("y", [1.0, -1.0, 1.5])
def test_profile_inverse_rejects_outside(y):
    with pytest.raises(ValueError):
        profile_inverse(y)


def test_fd_second_derivative_on_polynomial():
    r = np.linspace(-2, 2, 9)
    assert np.allclose(fd_second_derivative(lambda x: x**5, r), 20 * r**3, atol=1e-9)


def test_c0_matches_closed_form():
    assert abs(c0() - C0_EXACT) / C0_EXACT < 1e-8
    # independent oracle: quadrature of sqrt(2W) over [-1, 1]
    ref = integrate.quad(lambda s: math.sqrt(2 * double_well(s)), -1, 1, epsabs=1e-13)[0]
    assert c0() == pytest.approx(ref, rel=1e-10)


def test_simpson_rules_are_exact_on_cubics():
    f = lambda x: 3 * x**3 - x + 2
    assert composite_simpson(f, -1.0, 2.0, 4) == pytest.approx(3 * (16 - 1) / 4 - (4 - 1) / 2 + 6, rel=1e-14)
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-10)


def test_composite_simpson_rejects_bad_panels():
    with pytest.raises(ValueError):
        composite_simpson(math.sin, 0.0, 1.0, 0)


def test_smoothstep_endpoints_and_slope():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert np.allclose(smoothstep5(t), [0, 0, 0.5, 1, 1])
    assert np.allclose(smoothstep5_prime(np.array([0.0, 1.0])), 0.0)
    x = np.linspace(0.01, 0.99, 50)
    k = 1e-6
    assert np.allclose((smoothstep5(x + k) - smoothstep5(x - k)) / (2 * k), smoothstep5_prime(x), atol=1e-8)


class TestCutoff:
    p = CutoffParams()

    def test_default_parameters(self):
        assert self.p.lam == pytest.approx(1 / 61)
        assert self.p.inner_edge == pytest.approx(1 - 1 / 61)
        assert self.p.inner_edge < self.p.outer_edge < 1.0

    def test_plateau_and_support(self):
        s = np.linspace(-self.p.inner_edge, self.p.inner_edge, 101)
        assert np.all(cutoff_wtilde(s, self.p) == 1.0)
        s = np.array([self.p.outer_edge, 0.999, 1.0, -1.0, 3.0])
        assert np.all(cutoff_wtilde(s, self.p) == 0.0)
        mid = 0.5 * (self.p.inner_edge + self.p.outer_edge)
        assert 0 < cutoff_wtilde(mid, self.p) < 1

    def test_even_and_monotone_in_abs(self):
        s = np.linspace(0, 1.2, 500)
        w = cutoff_wtilde(s, self.p)
        assert np.array_equal(w, cutoff_wtilde(-s, self.p))
        assert np.all(np.diff(w) <= 0)

    def test_derivative(self):
        s = np.linspace(self.p.inner_edge - 0.002, self.p.outer_edge + 0.002, 60)
        k = 1e-8
        fd = (cutoff_wtilde(s + k, self.p) - cutoff_wtilde(s - k, self.p)) / (2 * k)
        assert np.allclose(fd, cutoff_wtilde_prime(s, self.p), atol=1e-4 * np.abs(fd).max())

    def test_wells_are_outside_the_scaled_band(self):
        # the detector band uses W~(lambda_bar u); u = +-1 must give zero there
        assert cutoff_wtilde(self.p.lambda_bar, self.p) == 0.0
        assert cutoff_wtilde(-self.p.lambda_bar, self.p) == 0.0

    @pytest.mark.parametrize("kw", [{"lam": 0.0}, {"lam": 1.0}, {"lambda_bar": 0.5}, {"lambda_bar": 1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CutoffParams(**kw)


def test_c_tilde0_bounds_and_oracle():
    p = CutoffParams()
    ct = c_tilde0(p)
    r1 = profile_inverse(1 - p.lam)
    upper = 2 * profile_inverse(p.outer_edge)
    assert 2 * r1 < ct < upper
    assert plateau_halfwidth(p) == pytest.approx(r1)
    assert support_halfwidth(p) == pytest.approx(profile_inverse(p.outer_edge))
    ref = integrate.quad(lambda r: cutoff_wtilde(optimal_profile(r), p), -upper, upper, points=[-r1, r1], epsabs=1e-12, limit=200)[0]
    assert ct == pytest.approx(ref, rel=1e-8)
    assert c_tilde0_plateau(p) == pytest.approx(2 * r1)


@settings(max_examples=25)
@given(st.floats(min_value=1e-3, max_value=0.2))
def test_c_tilde0_within_bounds_for_any_lambda(lam):
    p = CutoffParams(lam=lam)
    assert 2 * plateau_halfwidth(p) <= c_tilde0(p) <= 2 * support_halfwidth(p)


def test_public_constants():
    assert scalar.SQRT2 == pytest.approx(math.sqrt(2))
