import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffuse_willmore.grid import (
    DomainMask,
    GridSpec,
    ScalarField,
    check_resolution,
    constant_field,
    div_coeff_grad,
    grad_sq,
    grad_sq_array,
    inner_product,
    integrate,
    laplacian,
    laplacian_array,
)

BCS = ("dirichlet_minus_one", "neumann", "dirichlet_zero")


def square(n=20, h=0.05):
    return GridSpec((n, n), (0.0, 0.0), h)


def punched_mask(grid):
    """An L-shaped container: not a box, still face-connected."""
    inside = np.ones(grid.shape, bool)
    inside[: grid.shape[0] // 2, : grid.shape[1] // 2] = False
    return DomainMask(grid, inside)


class TestGridSpec:
    def test_geometry(self):
        g = GridSpec((4, 6), (-1.0, 0.0), 0.5)
        assert g.dim == 2 and g.size == 24 and g.cell_volume == 0.25
        assert g.upper == (1.0, 3.0)
        assert np.allclose(g.axis_centers(0), [-0.75, -0.25, 0.25, 0.75])
        assert g.ghost_ring_centers().shape == (6 * 8 - 24, 2)

    def test_from_box_centres_grid(self):
        g = GridSpec.from_box((-0.5, -0.5), (0.5, 0.5), 0.01)
        assert g.shape == (100, 100)
        assert g.h == pytest.approx(0.01)
        assert np.allclose(g.origin, (-0.5, -0.5))

    @pytest.mark.parametrize(
        "args",
        [((4,), (0.0,), 1.0), ((4, 4, 4, 4), (0.0,) * 4, 1.0), ((3, 4), (0.0, 0.0), 1.0), ((4, 4), (0.0,), 1.0), ((4, 4), (0.0, 0.0), 0.0)],
    )
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            GridSpec(*args)


def test_scalar_field_validation():
    g = square(4)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(5))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(16, np.nan))
    f = ScalarField(g, np.arange(16.0))
    assert f.values.shape == (4, 4)
    assert np.array_equal((-f).values, -f.values)


def test_mask_must_be_connected_and_nonempty():
    g = square(8)
    with pytest.raises(ValueError):
        DomainMask(g, np.zeros(g.shape, bool))
    inside = np.zeros(g.shape, bool)
    inside[:2, :2] = True
    inside[5:, 5:] = True
    with pytest.raises(ValueError, match="face-connected"):
        DomainMask(g, inside)
    diag = np.eye(8, dtype=bool)  # corner-touching only
    with pytest.raises(ValueError):
        DomainMask(g, diag)


def test_ball_mask_and_volume():
    g = GridSpec.from_box((-1, -1), (1, 1), 0.01)
    m = DomainMask.ball(g, (0, 0), 0.8)
    assert not m.is_full
    assert m.volume == pytest.approx(np.pi * 0.64, rel=1e-3)
    assert np.all(m.clamp_exterior(np.zeros(g.shape))[~m.inside] == -1.0)


@pytest.mark.parametrize("order", [2, 4])
def test_laplacian_exact_on_polynomials(order):
    g = square(24, 0.1)
    m = DomainMask.full(g)
    x, y = g.centers()
    f = x**2 + 3 * y**2 if order == 2 else x**4 - y**4
    exact = 8.0 + 0 * x if order == 2 else 12 * x**2 - 12 * y**2
    lap = laplacian_array(np.broadcast_to(f, g.shape).copy(), m, "neumann", order)
    interior = (slice(3, -3), slice(3, -3))
    assert np.allclose(lap[interior], np.broadcast_to(exact, g.shape)[interior], atol=1e-9)


def test_laplacian_order4_converges_faster():
    errs = {2: [], 4: []}
    for n in (32, 64):
        g = GridSpec((n, n), (0.0, 0.0), 1.0 / n)
        m = DomainMask.full(g)
        x, y = g.centers()
        f = np.broadcast_to(np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y), g.shape).copy()
        exact = -8 * np.pi**2 * f
        for order in (2, 4):
            lap = laplacian_array(f, m, "dirichlet_zero", order)
            errs[order].append(np.abs(lap - exact)[4:-4, 4:-4].max())
    assert errs[2][0] / errs[2][1] == pytest.approx(4, rel=0.1)
    assert errs[4][0] / errs[4][1] == pytest.approx(16, rel=0.15)


@pytest.mark.parametrize("bc", BCS)
@pytest.mark.parametrize("order", [2, 4])
@pytest.mark.parametrize("masked", [False, True])
def test_grad_sq_energy_gradient_is_minus_two_laplacian(bc, order, masked, rng):
    """d/df of the integral of grad_sq equals -2 laplacian (the discrete adjoint pair)."""
    g = square(12, 0.1)
    m = punched_mask(g) if masked else DomainMask.full(g)
    f = np.where(m.inside, rng.normal(size=g.shape), -1.0)

    def energy(v):
        return float(grad_sq_array(v, m, bc, order)[m.inside].sum()) * g.cell_volume

    lap = laplacian_array(f, m, bc, order)
    for _ in range(3):
        d = np.where(m.inside, rng.normal(size=g.shape), 0.0)
        t = 1e-4
        fd = (energy(f + t * d) - energy(f - t * d)) / (2 * t)  # energy is quadratic: exact
        assert fd == pytest.approx(-2 * inner_product(lap, d, m), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("masked", [False, True])
def test_div_coeff_grad_self_adjoint(masked, rng):
    g = square(16, 0.05)
    m = punched_mask(g) if masked else DomainMask.full(g)
    a = ScalarField(g, rng.uniform(0.1, 3.0, g.shape))
    for _ in range(5):
        f = ScalarField(g, rng.normal(size=g.shape))
        q = ScalarField(g, rng.normal(size=g.shape))
        lhs = integrate(div_coeff_grad(a, f, m).with_values(div_coeff_grad(a, f, m).values * q.values), m)
        rhs = integrate(div_coeff_grad(a, q, m).with_values(div_coeff_grad(a, q, m).values * f.values), m)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_div_coeff_grad_constant_coefficient_is_neumann_laplacian(rng):
    g = square(10, 0.1)
    m = DomainMask.full(g)
    f = ScalarField(g, rng.normal(size=g.shape))
    one = constant_field(g, 1.0)
    assert np.allclose(div_coeff_grad(one, f, m).values, laplacian(f, m, "neumann").values)
    with pytest.raises(ValueError):
        div_coeff_grad(constant_field(g, -1.0), f, m)


def test_constant_fields_have_no_gradient():
    g = square(8)
    m = DomainMask.full(g)
    for bc, value in (("neumann", 0.3), ("dirichlet_minus_one", -1.0), ("dirichlet_zero", 0.0)):
        c = constant_field(g, value)
        assert np.all(laplacian(c, m, bc, 4).values == 0)
        assert np.all(grad_sq(c, m, bc, 4).values == 0)


def test_midpoint_integration():
    g = GridSpec.from_box((0, 0), (1, 2), 0.01)
    m = DomainMask.full(g)
    x, y = g.centers()
    f = ScalarField(g, np.broadcast_to(x + y, g.shape))
    assert integrate(f, m) == pytest.approx(1.0 + 2.0, rel=1e-12)


def test_check_resolution(caplog):
    g = GridSpec((8, 8), (0, 0), 0.1)
    with pytest.raises(ValueError):
        check_resolution(g, 0.1)
    check_resolution(g, 0.3)
    assert "under-resolved" in caplog.text
    caplog.clear()
    check_resolution(g, 0.4)
    assert caplog.text == ""


def test_mismatched_grids_rejected():
    g1, g2 = square(8), square(9)
    m = DomainMask.full(g1)
    with pytest.raises(ValueError):
        laplacian(constant_field(g2, 0.0), m, "neumann")


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 12), st.integers(4, 12), st.integers(0, 2**31))
def test_laplacian_negative_semidefinite(nx, ny, seed):
    g = GridSpec((nx, ny), (0, 0), 0.1)
    m = DomainMask.full(g)
    f = np.random.default_rng(seed).normal(size=g.shape)
    for bc in ("neumann", "dirichlet_zero"):
        for order in (2, 4):
            assert inner_product(f, laplacian_array(f, m, bc, order), m) <= 1e-12
