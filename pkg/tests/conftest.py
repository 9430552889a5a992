import numpy as np
import pytest

from diffuse_willmore.energies import PhaseFieldParams, area_energy
from diffuse_willmore.grid import DomainMask, GridSpec, ScalarField
from diffuse_willmore.shapes import Ball, ShapeSpec, recovery_for


def unit_box(eps: float, h_factor: float = 0.2) -> GridSpec:
    return GridSpec.from_box((-0.5, -0.5), (0.5, 0.5), h_factor * eps)


def ball_field(eps: float, radius: float = 0.3, mask_radius: float | None = None, h_factor: float = 0.2):
    grid = unit_box(eps, h_factor)
    mask = DomainMask.full(grid) if mask_radius is None else DomainMask.ball(grid, (0.0, 0.0), mask_radius)
    u = recovery_for(ShapeSpec((Ball((0.0, 0.0), radius),)), grid, mask, eps)
    return grid, mask, u


def two_ball_field(eps: float, radius: float = 0.2, offset: float = 0.45):
    grid = GridSpec.from_box((-1.0, -0.5), (1.0, 0.5), eps / 5)
    mask = DomainMask.full(grid)
    shape = ShapeSpec((Ball((-offset, 0.0), radius), Ball((offset, 0.0), radius)))
    return grid, mask, recovery_for(shape, grid, mask, eps)


def params_for(u: ScalarField, mask: DomainMask, eps: float, **kw) -> PhaseFieldParams:
    s = area_energy(u, mask, PhaseFieldParams(eps, 1.0, **kw))
    return PhaseFieldParams(eps, s, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_ball():
    eps = 0.04
    grid, mask, u = ball_field(eps)
    return grid, mask, u, params_for(u, mask, eps)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
