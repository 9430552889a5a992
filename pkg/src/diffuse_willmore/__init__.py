"""Diffuse-interface Willmore energy with an area constraint and a connectedness penalty."""

from .diagnostics import SweepResult, count_components, discrepancy, gamma_sweep
from .energies import (
    Detector,
    EnergyBreakdown,
    PhaseFieldParams,
    alpha_density,
    area_energy,
    connectedness_baseline,
    connectedness_functional,
    discrepancy_density,
    grad_area,
    grad_connect_wrt_phi,
    grad_total_wrt_u,
    grad_willmore,
    mu_density,
    total_energy,
    willmore_energy,
)
from .grid import DomainMask, GridSpec, ScalarField
from .inner import InnerResult, InnerSolverConfig, candidate_separating_phi, minimize_connectedness
from .outer import OuterSolverConfig, evolve, outer_step
from .report import SolverError, SolverReport
from .scalar import CutoffParams, c0, c_tilde0, cutoff_wtilde, double_well, optimal_profile, profile_inverse
from .shapes import Ball, Ellipsoid, RecoveryParams, ShapeSpec, Torus, build_recovery, recovery_for

__version__ = "0.1.0"
