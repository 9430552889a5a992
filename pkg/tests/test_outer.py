import numpy as np
import pytest

from diffuse_willmore.energies import Detector, PhaseFieldParams, frozen_energy, frozen_gradient
from diffuse_willmore.grid import DomainMask, GridSpec, ScalarField, inner_product, laplacian_array
from diffuse_willmore.inner import InnerSolverConfig, minimize_connectedness
from diffuse_willmore.outer import BiharmonicPreconditioner, OuterSolverConfig, evolve, outer_step
from diffuse_willmore.report import SolverError
from diffuse_willmore.shapes import Ellipsoid, ShapeSpec, recovery_for

from conftest import ball_field, params_for

EPS = 0.03


@pytest.fixture(scope="module")
def ellipse():
    grid = GridSpec.from_box((-0.5, -0.5), (0.5, 0.5), EPS / 5)
    mask = DomainMask.ball(grid, (0.0, 0.0), 0.45)
    u = recovery_for(ShapeSpec((Ellipsoid((0.0, 0.0), (0.3, 0.18)),)), grid, mask, EPS)
    return grid, mask, u, params_for(u, mask, EPS)


@pytest.fixture(scope="module")
def short_flow(ellipse):
    g, m, u, p = ellipse
    cfg = OuterSolverConfig(max_steps=12, inner_refresh=4)
    return evolve(u, m, p, cfg, InnerSolverConfig(restarts=1))


@pytest.mark.parametrize(
    "kw",
    [{"dt0": 0.0}, {"inner_refresh": 0}, {"max_steps": -1}, {"scheme": "rk4"}, {"backtrack": 1.0}, {"growth": 0.5}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OuterSolverConfig(**kw)


def test_exterior_stays_fixed(ellipse, short_flow):
    g, m, u, p = ellipse
    assert np.all(short_flow.u_star.values[~m.inside] == -1.0)


def test_trace_is_monotone(short_flow):
    totals = [e.total for e in short_flow.trace]
    assert len(totals) == 13
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(totals, totals[1:]))
    assert totals[-1] < totals[0]
    assert short_flow.refreshes == [0, 4, 8, 12]


def test_rejects_bad_exterior(ellipse):
    g, m, u, p = ellipse
    bad = u.values.copy()
    bad[0, 0] = 0.0
    with pytest.raises(ValueError, match="outside"):
        evolve(ScalarField(g, bad), m, p)


def test_trivial_state_stops_immediately(ellipse):
    g, m, _, p = ellipse
    res = evolve(ScalarField(g, -np.ones(g.shape)), m, p, OuterSolverConfig(max_steps=5))
    assert res.report.termination == "zero gradient at trivial state"
    assert len(res.trace) == 1


def test_zero_gradient_step_keeps_dt(ellipse):
    g, m, _, p = ellipse
    u = ScalarField(g, -np.ones(g.shape))
    step = outer_step(u, ScalarField(g, np.ones(g.shape)), m, p, dt=3e-4)
    assert step.dt_used == 3e-4
    assert np.array_equal(step.u_next.values, u.values)


def test_explicit_scheme_underflow_is_reported(ellipse):
    g, m, u, p = ellipse
    phi = ScalarField(g, np.ones(g.shape))
    cfg = OuterSolverConfig(scheme="explicit", dt0=1e-2, min_dt=1e-3)
    with pytest.raises(SolverError, match="semi_implicit"):
        outer_step(u, phi, m, p, cfg)


def test_step_satisfies_armijo(ellipse):
    g, m, u, p = ellipse
    phi = minimize_connectedness(u, m, p, InnerSolverConfig(restarts=1)).phi_star
    for scheme in ("explicit", "semi_implicit"):
        cfg = OuterSolverConfig(scheme=scheme, dt0=1e-3)
        step = outer_step(u, phi, m, p, cfg)
        e0 = frozen_energy(u.values, phi.values, m, p)
        g0 = frozen_gradient(u.values, phi.values, m, p)
        # the accepted move is u - dt d with <g, d> >= 0; Armijo bounds the decrease from below
        d = (u.values - step.u_next.values) / step.dt_used
        slope = inner_product(g0, d, m)
        assert slope > 0
        assert step.energy_next.total <= e0.total - cfg.armijo_c * step.dt_used * slope


def test_schemes_agree_to_second_order(ellipse):
    g, m, u, p = ellipse
    phi = ScalarField(g, np.ones(g.shape))

    def gap(dt):
        a = outer_step(u, phi, m, p, OuterSolverConfig(scheme="explicit"), dt=dt)
        b = outer_step(u, phi, m, p, OuterSolverConfig(scheme="semi_implicit"), dt=dt)
        assert a.dt_used == b.dt_used == dt
        return np.abs(a.u_next.values - b.u_next.values).max()

    # the moves differ by dt * tau * Lap0^2 g + ..., with tau proportional to dt
    ratio = gap(1e-14) / gap(5e-15)
    assert ratio == pytest.approx(4.0, rel=0.05)


class TestPreconditioner:
    def _apply(self, mask, x, tau):
        lx = laplacian_array(x, mask, "dirichlet_zero")
        return x + tau * laplacian_array(lx, mask, "dirichlet_zero")

    def test_box_inverse_is_exact(self, rng):
        g = GridSpec((17, 12), (0.0, 0.0), 0.1)
        m = DomainMask.full(g)
        pre = BiharmonicPreconditioner(m)
        r = rng.normal(size=g.shape)
        for tau in (1e-4, 1.0):
            x = pre.solve(r, tau)
            assert np.allclose(self._apply(m, x, tau), r, atol=1e-9 * np.abs(r).max())
        assert np.array_equal(pre.solve(r, 0.0), r)

    def test_masked_cg(self, rng):
        g = GridSpec((30, 30), (-1.5, -1.5), 0.1)
        m = DomainMask.ball(g, (0.0, 0.0), 1.2)
        pre = BiharmonicPreconditioner(m, cg_tol=1e-10)
        r = np.where(m.inside, rng.normal(size=g.shape), 0.0)
        x = pre.solve(r, 0.05)
        assert np.all(x[~m.inside] == 0.0)
        res = np.where(m.inside, self._apply(m, x, 0.05) - r, 0.0)
        assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(r)
        assert pre.cg_iterations > 0


def test_checkpoint_callback(ellipse):
    g, m, u, p = ellipse
    seen = []
    evolve(u, m, p, OuterSolverConfig(max_steps=4, checkpoint_every=2), InnerSolverConfig(restarts=1),
           checkpoint=lambda k, f: seen.append(k))  # fmt: skip
    assert seen == [2, 4]
