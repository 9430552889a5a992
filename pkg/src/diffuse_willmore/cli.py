"""Command-line entry point: ``solver <command> --config <path> [--output <dir>] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import io
from .diagnostics import count_components, discrepancy, gamma_sweep
from .energies import PhaseFieldParams, area_energy, total_energy
from .grid import DomainMask, GridSpec, ScalarField, check_resolution
from .inner import InnerSolverConfig, minimize_connectedness
from .outer import OuterSolverConfig, evolve
from .report import SolverError, SolverReport
from .scalar import CutoffParams, c0, c_tilde0, profile_residuals
from .shapes import Ball, Ellipsoid, ShapeSpec, Torus, recovery_for

logger = logging.getLogger("diffuse_willmore")

COMMANDS = ("profile-check", "recover", "energy", "inner", "flow", "sweep", "components")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    pass


def _strict(section: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return section


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing {where}.{key}")
    return cfg[key]


def _vec(x, where: str) -> tuple[float, ...]:
    if not isinstance(x, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        raise ConfigError(f"{where} must be a list of numbers")
    return tuple(float(v) for v in x)


TOP_KEYS = {
    "command", "domain", "grid", "params", "shape", "initial", "inner", "outer",
    "sweep", "profile_check", "continuation", "output_dir", "seed", "threads", "log_level",
}  # fmt: skip
REQUIRED = {
    "profile-check": (),
    "recover": ("domain", "grid", "params", "shape"),
    "energy": ("domain", "grid", "params"),
    "inner": ("domain", "grid", "params"),
    "flow": ("domain", "grid", "params"),
    "sweep": ("domain", "params", "shape", "sweep"),
    "components": ("domain", "grid", "params"),
}


@dataclass
class Domain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    ball: tuple[tuple[float, ...], float] | None = None  # (center, radius) container

    def grid(self, cells: tuple[int, ...]) -> GridSpec:
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        if len(cells) != lower.size:
            raise ConfigError("grid.cells_per_axis must have one entry per domain axis")
        spacing = (upper - lower) / np.asarray(cells)
        if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
            raise ConfigError(f"cells_per_axis gives unequal spacings {spacing.tolist()}; cells must be cubes")
        return GridSpec(cells, tuple(lower), float(spacing[0]))

    def mask(self, grid: GridSpec) -> DomainMask:
        if self.ball is None:
            return DomainMask.full(grid)
        return DomainMask.ball(grid, *self.ball)


def parse_domain(d) -> Domain:
    d = _strict(d, {"box", "ball"}, "domain")
    if len(d) != 1:
        raise ConfigError("domain needs exactly one of 'box' or 'ball'")
    if "box" in d:
        box = _strict(d["box"], {"lower", "upper"}, "domain.box")
        lower = _vec(_require(box, "lower", "domain.box"), "domain.box.lower")
        upper = _vec(_require(box, "upper", "domain.box"), "domain.box.upper")
        if len(lower) != len(upper) or any(b <= a for a, b in zip(lower, upper)):
            raise ConfigError("domain.box needs lower < upper on every axis")
        return Domain(lower, upper)
    ball = _strict(d["ball"], {"center", "radius"}, "domain.ball")
    center = _vec(_require(ball, "center", "domain.ball"), "domain.ball.center")
    radius = float(_require(ball, "radius", "domain.ball"))
    if radius <= 0:
        raise ConfigError("domain.ball.radius must be positive")
    return Domain(tuple(c - radius for c in center), tuple(c + radius for c in center), (center, radius))


def parse_shape(s) -> ShapeSpec:
    s = _strict(s, {"primitives", "delta"}, "shape")
    prims = []
    for k, item in enumerate(_require(s, "primitives", "shape")):
        where = f"shape.primitives[{k}]"
        item = _strict(item, {"ball", "ellipsoid", "torus"}, where)
        if len(item) != 1:
            raise ConfigError(f"{where} needs exactly one primitive kind")
        kind, body = next(iter(item.items()))
        if kind == "ball":
            body = _strict(body, {"center", "radius"}, f"{where}.ball")
            prims.append(Ball(_vec(_require(body, "center", where), f"{where}.center"), float(_require(body, "radius", where))))
        elif kind == "ellipsoid":
            body = _strict(body, {"center", "semi_axes"}, f"{where}.ellipsoid")
            prims.append(Ellipsoid(_vec(_require(body, "center", where), f"{where}.center"), _vec(_require(body, "semi_axes", where), f"{where}.semi_axes")))
        else:
            body = _strict(body, {"center", "major", "minor"}, f"{where}.torus")
            prims.append(
                Torus(_vec(_require(body, "center", where), f"{where}.center"), float(_require(body, "major", where)), float(_require(body, "minor", where)))
            )
    return ShapeSpec(tuple(prims), s.get("delta"))


PARAM_KEYS = {"epsilon", "sigma", "target_area", "lambda", "lambda_bar", "coeff_well", "coeff_grad", "stencil_order"}


def parse_cutoff(p: dict) -> CutoffParams:
    kw = {}
    if "lambda" in p:
        kw["lam"] = float(p["lambda"])
    if "lambda_bar" in p:
        kw["lambda_bar"] = float(p["lambda_bar"])
    return CutoffParams(**kw)


def parse_params(p: dict, target_area: float) -> PhaseFieldParams:
    kw: dict[str, Any] = {"epsilon": float(_require(p, "epsilon", "params")), "target_area": target_area, "cutoff": parse_cutoff(p)}
    for key in ("sigma", "coeff_well", "coeff_grad"):
        if key in p:
            kw[key] = float(p[key])
    if "stencil_order" in p:
        kw["stencil_order"] = int(p["stencil_order"])
    return PhaseFieldParams(**kw)


def _dataclass_from(cls, section, where: str, **extra):
    names = {f.name for f in fields(cls)}
    section = _strict(section or {}, names, where)
    kw = dict(section)
    if "continuation_factors" in kw:
        kw["continuation_factors"] = tuple(kw["continuation_factors"])
    kw.update({k: v for k, v in extra.items() if k not in kw})
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class RunConfig:
    command: str
    raw: dict
    output_dir: Path
    seed: int = 0
    threads: int = 1
    domain: Domain | None = None
    cells: tuple[int, ...] | None = None
    shape: ShapeSpec | None = None
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    outer: OuterSolverConfig = field(default_factory=OuterSolverConfig)


def load_config(path: Path | str, command: str, output: str | None, threads: int | None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    raw = _strict(raw, TOP_KEYS, "config")
    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"config command {raw['command']!r} does not match the command line {command!r}")
    for key in REQUIRED[command]:
        if key not in raw:
            raise ConfigError(f"command {command} needs the '{key}' section")
    out = output or raw.get("output_dir") or "."
    seed = int(raw.get("seed", 0))
    n_threads = int(threads if threads is not None else raw.get("threads", 1))
    if n_threads < 0:
        raise ConfigError("threads must be >= 0")
    if n_threads == 0:
        n_threads = os.cpu_count() or 1
    cfg = RunConfig(command, raw, Path(out), seed, n_threads)
    if "domain" in raw:
        cfg.domain = parse_domain(raw["domain"])
    if "grid" in raw:
        g = _strict(raw["grid"], {"cells_per_axis"}, "grid")
        cells = _require(g, "cells_per_axis", "grid")
        if not isinstance(cells, list) or not all(isinstance(n, int) for n in cells):
            raise ConfigError("grid.cells_per_axis must be a list of integers")
        cfg.cells = tuple(cells)
    if "params" in raw:
        praw = _strict(raw["params"], PARAM_KEYS, "params")
        # validate sigma, cutoff and coefficients up front (sweeps carry no epsilon here)
        parse_params({**praw, "epsilon": praw.get("epsilon", 1.0)}, 1.0)
    if "shape" in raw:
        cfg.shape = parse_shape(raw["shape"])
    if "continuation" in raw:
        if command != "flow":
            raise ConfigError("the 'continuation' section only applies to the flow command")
        _stages(raw)
    cfg.inner = _dataclass_from(InnerSolverConfig, raw.get("inner"), "inner", seed=seed)
    cfg.outer = _dataclass_from(OuterSolverConfig, raw.get("outer"), "outer")
    return cfg


# commands ---------------------------------------------------------------------


@dataclass
class Setup:
    grid: GridSpec
    mask: DomainMask
    u: ScalarField
    p: PhaseFieldParams


def _initial_field(cfg: RunConfig, grid: GridSpec, mask: DomainMask, eps: float, sigma: float) -> ScalarField:
    init = _strict(cfg.raw.get("initial", {"kind": "recovery"}), {"kind", "value", "path"}, "initial")
    kind = init.get("kind", "recovery")
    if kind == "recovery":
        if cfg.shape is None:
            raise ConfigError("initial kind 'recovery' needs the 'shape' section")
        return recovery_for(cfg.shape, grid, mask, eps, sigma)
    if kind == "constant":
        value = float(init.get("value", -1.0))
        return ScalarField(grid, mask.clamp_exterior(np.full(grid.shape, value)))
    if kind == "vtk":
        f = io.read_vtk(_require(init, "path", "initial"), grid.dim)
        if f.grid.shape != grid.shape or not np.isclose(f.grid.h, grid.h, rtol=1e-9):
            raise ConfigError("initial VTK field does not match the configured grid")
        return ScalarField(grid, mask.clamp_exterior(f.values))
    raise ConfigError(f"unknown initial kind {kind!r}")


def _setup(cfg: RunConfig) -> Setup:
    grid = cfg.domain.grid(cfg.cells)
    mask = cfg.domain.mask(grid)
    praw = cfg.raw["params"]
    eps = float(_require(praw, "epsilon", "params"))
    sigma = float(praw.get("sigma", 0.1))
    # validate sigma and friends before touching the field
    probe = parse_params(praw, 1.0)
    check_resolution(grid, eps)
    u = _initial_field(cfg, grid, mask, eps, sigma)
    target = praw.get("target_area", "initial")
    if target == "initial":
        target = area_energy(u, mask, probe)
    elif not isinstance(target, (int, float)) or isinstance(target, bool):
        raise ConfigError("params.target_area must be a number or \"initial\"")
    return Setup(grid, mask, u, parse_params(praw, float(target)))


def _write_report(path: Path, report: SolverReport) -> None:
    io.write_table(path, SolverReport.columns, report.rows)


def cmd_profile_check(cfg: RunConfig) -> dict:
    sec = _strict(cfg.raw.get("profile_check", {}), {"samples", "range"}, "profile_check")
    samples = int(sec.get("samples", 1000))
    lo, hi = _vec(sec.get("range", [-10.0, 10.0]), "profile_check.range")
    r, ode, first = profile_residuals(samples, lo, hi)
    io.write_table(cfg.output_dir / "profile_residuals.csv", ["r", "ode_residual", "first_integral_residual"], zip(r, ode, first))
    cutoff = parse_cutoff(_strict(cfg.raw.get("params", {}), PARAM_KEYS, "params"))
    return {
        "max_ode_residual": float(ode.max()),
        "max_first_integral_residual": float(first.max()),
        "c0": c0(),
        "c_tilde0": c_tilde0(cutoff),
    }


def cmd_recover(cfg: RunConfig) -> dict:
    s = _setup(cfg)
    io.write_vtk(cfg.output_dir / "u.vtk", s.u, "u")
    io.write_field_csv(cfg.output_dir / "u.csv", s.u)
    return {"area": area_energy(s.u, s.mask, s.p), "discrepancy": discrepancy(s.u, s.mask, s.p)}


def _inner(cfg: RunConfig, s: Setup):
    res = minimize_connectedness(s.u, s.mask, s.p, cfg.inner)
    return res, total_energy(s.u, s.mask, s.p, res.value)


def cmd_energy(cfg: RunConfig) -> dict:
    s = _setup(cfg)
    res, e = _inner(cfg, s)
    io.write_table(cfg.output_dir / "energy.csv", e.columns(), [e.row()])
    return {"total": e.total, "inner_branch": res.branch}


def cmd_inner(cfg: RunConfig) -> dict:
    s = _setup(cfg)
    res, e = _inner(cfg, s)
    io.write_table(cfg.output_dir / "energy.csv", e.columns(), [e.row()])
    _write_report(cfg.output_dir / "report.csv", res.report)
    io.write_vtk(cfg.output_dir / "phi_star.vtk", res.phi_star, "phi")
    return {
        "value": res.value,
        "baseline": res.baseline,
        "relative_gap": (res.baseline - res.value) / res.baseline if res.baseline > 0 else 0.0,
        "branch": res.branch,
        "termination": res.report.termination,
        "notes": res.report.notes,
    }


def _stages(raw: dict) -> list[float]:
    """Epsilon schedule of a flow: the continuation values, then params.epsilon."""
    sec = _strict(raw.get("continuation", {}), {"epsilons"}, "continuation")
    stages = list(_vec(sec.get("epsilons", []), "continuation.epsilons"))
    stages.append(float(_require(raw["params"], "epsilon", "params")))
    if any(b >= a for a, b in zip(stages, stages[1:])):
        raise ConfigError("continuation.epsilons must decrease strictly and stay above params.epsilon")
    return stages


def cmd_flow(cfg: RunConfig) -> dict:
    s = _setup(cfg)
    out = cfg.output_dir
    stages = _stages(cfg.raw)
    u = s.u
    if len(stages) > 1:
        for eps in stages:
            check_resolution(s.grid, eps)
        if cfg.raw.get("initial", {}).get("kind", "recovery") == "recovery":
            u = _initial_field(cfg, s.grid, s.mask, stages[0], s.p.sigma)
    offset = 0

    def checkpoint(step: int, f: ScalarField) -> None:
        io.write_vtk(out / f"u_{offset + step:06d}.vtk", f, "u")

    io.write_vtk(out / "u_initial.vtk", u, "u")
    rows, report_rows, notes = [], [], []
    # the target area stays the one resolved at the final epsilon
    for k, eps in enumerate(stages):
        res = evolve(u, s.mask, replace(s.p, epsilon=eps), cfg.outer, cfg.inner, checkpoint)
        rows.extend((offset + j, k, *e.row()) for j, e in enumerate(res.trace))
        report_rows.extend(r._replace(iter=offset + r.iter) for r in res.report.rows)
        prefix = f"stage {k} (eps={eps:g}): " if len(stages) > 1 else ""
        notes.extend(prefix + n for n in res.report.notes)
        offset += len(res.trace) - 1
        u = res.u_star
    io.write_table(out / "trace.csv", ["step", "stage", *res.trace[0].columns()], rows)
    io.write_table(out / "report.csv", SolverReport.columns, report_rows)
    io.write_vtk(out / "u_final.vtk", res.u_star, "u")
    if res.phi_star is not None:
        io.write_vtk(out / "phi_star.vtk", res.phi_star, "phi")
    return {"termination": res.report.termination, "steps": offset, "stages": stages, "final_total": res.trace[-1].total, "notes": notes}


def cmd_sweep(cfg: RunConfig) -> dict:
    sec = _strict(cfg.raw["sweep"], {"epsilons", "h_factor", "max_cells"}, "sweep")
    praw = cfg.raw["params"]
    eps_list = _vec(_require(sec, "epsilons", "sweep"), "sweep.epsilons")
    sigma = float(praw.get("sigma", 0.1))
    target = praw.get("target_area")
    if target == "initial":
        raise ConfigError("sweep uses the sharp area as target; give a number or omit params.target_area")
    dom = cfg.domain
    res = gamma_sweep(
        cfg.shape,
        eps_list,
        dom.lower,
        dom.upper,
        sigma=sigma,
        h_factor=float(sec.get("h_factor", 0.2)),
        target_area=target,
        container=dom.mask,
        inner_cfg=cfg.inner,
        cutoff=parse_cutoff(praw),
        max_cells=int(sec.get("max_cells", 20_000_000)),
        threads=cfg.threads,
    )
    path = cfg.output_dir / "sweep.csv"
    cols = ["epsilon", "h", "components", "area_error", "willmore_error"] + [c for c in res.rows[0].breakdown.columns() if c != "epsilon"] if res.rows else ["epsilon"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in res.rows:
            vals = [r.epsilon, r.h, r.components, r.area_error, r.willmore_error] + list(r.breakdown.row())[1:]
            fh.write(",".join(io.fmt(v) for v in vals) + "\n")
        fh.write("\nquantity,fitted_order\n")
        for name, order in res.fitted_orders.items():
            fh.write(f"{name},{io.fmt(order)}\n")
    return {"fitted_orders": res.fitted_orders, "rows": len(res.rows), "notes": res.notes}


def cmd_components(cfg: RunConfig) -> dict:
    s = _setup(cfg)
    n = count_components(s.u, s.mask, s.p)
    n_neg = count_components(-s.u, s.mask, s.p)
    io.write_table(cfg.output_dir / "components.csv", ["components", "components_negated"], [(n, n_neg)])
    return {"components": n, "components_negated": n_neg}


HANDLERS = {
    "profile-check": cmd_profile_check,
    "recover": cmd_recover,
    "energy": cmd_energy,
    "inner": cmd_inner,
    "flow": cmd_flow,
    "sweep": cmd_sweep,
    "components": cmd_components,
}


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def run(command: str, config: str, output: str | None = None, threads: int | None = None) -> int:
    try:
        cfg = load_config(config, command, output, threads)
        level = cfg.raw.get("log_level", "WARNING")
        logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        resolved = {
            "command": command,
            "config": cfg.raw,
            "output_dir": str(cfg.output_dir),
            "seed": cfg.seed,
            "threads": cfg.threads,
            "inner": asdict(cfg.inner),
            "outer": asdict(cfg.outer),
        }
        with open(cfg.output_dir / "run.json", "w") as fh:
            json.dump(_jsonable(resolved), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = HANDLERS[command](cfg)
    except (ConfigError, ValueError) as exc:
        # bad shapes, resolutions or parameters surface while building fields
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ArithmeticError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    with open(cfg.output_dir / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solver", description="Diffuse Willmore energy with a connectedness penalty.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads, 0 = all cores")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.output, args.threads)


if __name__ == "__main__":
    sys.exit(main())
