"""Single runs, reference generation and parameter sweeps."""
from __future__ import annotations

import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..core import cell_averages
from ..dvm import default_velocity_grid, dvm_moments, solve_dvm
from ..euler import MusclRelaxedSolver, get_fluid_solver
from ..hybrid import FsiConfig, hybrid_dt, hybrid_step, initialize_hybrid, stable_dt
from ..particles import McmState, init_particles, mcm_step
from ..sampling import RngStream
from . import io
from .metrics import FIELDS, l1_from_fields, primitive_fields, restrict
from .scenarios import build_scenario

SOLVERS = ("mcm", "fsi", "fsi1", "dvm", "euler")
REFERENCE_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "accuracy"
    solver: str = "fsi"
    epsilon: float = 1e-4
    cells: int | None = None
    ppc: int | None = None
    tfinal: float | None = None
    seed: int = 42
    fluid_solver: str = "muscl_relaxed"
    matching: bool = True
    beta_estimator: str = "bound"
    out: str | None = None
    reference: str = "dvm"
    reference_cells: int | None = None
    n_v: int = 64
    steps: int | None = None
    init: str = "stratified"
    nu_max_with_u: bool = False
    cache_dir: str | None = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.reference not in ("dvm", "none"):
            raise ValueError("reference must be 'dvm' or 'none'")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class RunReport:
    config: dict
    seed: int
    x: np.ndarray
    U: np.ndarray
    beta: np.ndarray
    timeseries: np.ndarray
    errors: dict | None
    steps: int
    t: float
    diagnostics: dict = field(default_factory=dict)
    reference_U: np.ndarray | None = None
    wall_time: float = 0.0

    @property
    def profile(self) -> dict:
        prim = primitive_fields(self.U)
        return {"x": self.x, **prim, "E": self.U[2], "beta": self.beta}

    def summary(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "errors": self.errors,
            "steps": self.steps,
            "t_final": self.t,
            "final_particles": int(self.timeseries[-1, 1]),
            "diagnostics": self.diagnostics,
        }


def coerce_config(raw: dict) -> RunConfig:
    """Build a config from string values (CLI flags or sweep files)."""
    kinds = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, val in raw.items():
        key = key.replace("-", "_")
        if key not in kinds:
            raise ValueError(f"unknown config key {key!r}")
        if val is None or not isinstance(val, str):
            out[key] = val
            continue
        kind = str(kinds[key])
        if key == "matching" or kind.startswith("bool"):
            if val.lower() not in ("on", "off", "true", "false", "1", "0"):
                raise ValueError(f"{key} must be on or off")
            out[key] = val.lower() in ("on", "true", "1")
        elif "int" in kind:
            out[key] = int(val)
        elif "float" in kind:
            out[key] = float(val)
        else:
            out[key] = val
    return RunConfig(**out)


# ---------------------------------------------------------------- reference


def _cache_dir(config: RunConfig) -> Path:
    base = config.cache_dir or os.environ.get("BGKHYBRID_CACHE") or Path.home() / ".cache" / "bgkhybrid"
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def reference_key(scenario: str, epsilon: float, cells: int, tfinal: float, n_v: int) -> str:
    blob = json.dumps({"scenario": scenario, "epsilon": float(epsilon), "cells": int(cells),
                       "tfinal": float(tfinal), "n_v": int(n_v), "version": REFERENCE_VERSION}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def compute_reference(scenario: str, epsilon: float, cells: int, tfinal: float | None = None, n_v: int = 64):
    """DVM solution ``(x, U)`` of a scenario at ``cells`` resolution."""
    sc = build_scenario(scenario, cells)
    tf = sc.t_final if tfinal is None else tfinal
    U0 = cell_averages(sc.profile, sc.grid)
    kf = solve_dvm(U0, sc.grid, epsilon, tf, n_v=n_v)
    return sc.grid.centers, kf.moments


def load_reference(config: RunConfig, cells: int, tfinal: float):
    """Reference on the run grid, cached on disk under a content hash."""
    ref_cells = config.reference_cells or 2 * cells
    key = reference_key(config.scenario, config.epsilon, ref_cells, tfinal, config.n_v)
    path = _cache_dir(config) / f"ref_{config.scenario}_{key}.csv"
    if path.exists():
        _, U = io.read_profile_conserved(path)
    else:
        x, U = compute_reference(config.scenario, config.epsilon, ref_cells, tfinal, config.n_v)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        io.write_profile(tmp, x, U, np.zeros(U.shape[1]))
        os.replace(tmp, path)
        # reload so cached and fresh runs see identical values
        _, U = io.read_profile_conserved(path)
    return restrict(U, cells)


# ---------------------------------------------------------------- run


def _simulate(config: RunConfig, sc, tf: float):
    grid = sc.grid
    ppc = config.ppc or sc.ppc
    n_total = grid.n_cells * ppc
    rng = RngStream(config.seed)
    fluid = get_fluid_solver(config.fluid_solver)
    rows = []
    diagnostics = {}

    def done(t, k):
        if config.steps is not None:
            return k >= config.steps
        return t >= tf * (1.0 - 1e-14)

    if config.solver in ("fsi", "fsi1"):
        hcfg = FsiConfig(variant=config.solver, matching=config.matching, fluid_solver=config.fluid_solver,
                         beta_estimator=config.beta_estimator if config.solver == "fsi1" else "bound",
                         nu_max_with_u=config.nu_max_with_u)
        U0 = cell_averages(sc.profile, grid)
        dt0 = stable_dt(U0, grid, fluid, config.nu_max_with_u)
        if config.steps is None:
            dt0 = min(dt0, tf)
        state = initialize_hybrid(sc, n_total, config.epsilon, dt0, rng.child(0), method=config.init, config=hcfg)
        rows.append([state.t, state.particles.size, *state.totals()])
        while not done(state.t, state.step):
            dt = hybrid_dt(state, fluid, config.nu_max_with_u)
            if config.steps is None:
                dt = min(dt, tf - state.t)
            hybrid_step(state, dt, config.epsilon, fluid, rng.child(1), hcfg)
            rows.append([state.t, state.particles.size, *state.totals()])
        diagnostics = dict(state.diagnostics)
        return state.U, state.beta, rows, state.step, state.t, diagnostics

    if config.solver == "mcm":
        buf = init_particles(sc.profile, n_total, grid, rng.child(0), method=config.init)
        state = McmState(grid, buf)
        rows.append([0.0, buf.size, *(state.U.sum(axis=1) * grid.dx)])
        while not done(state.t, state.step):
            U = state.U
            dt = stable_dt(U, grid, fluid, config.nu_max_with_u)
            if config.steps is None:
                dt = min(dt, tf - state.t)
            mcm_step(state, dt, config.epsilon, rng.child(1), matching=config.matching)
            rows.append([state.t, state.particles.size, *(state.U.sum(axis=1) * grid.dx)])
        return state.U, state.beta, rows, state.step, state.t, dict(state.diagnostics)

    U0 = cell_averages(sc.profile, grid)
    rows.append([0.0, 0, *(U0.sum(axis=1) * grid.dx)])
    if config.solver == "dvm":
        vg = default_velocity_grid(U0, config.n_v)

        def record(t, f):
            rows.append([t, 0, *(dvm_moments(f, vg).sum(axis=1) * grid.dx)])

        t_end = np.inf if config.steps is not None else tf
        kf = solve_dvm(U0, grid, config.epsilon, t_end, vgrid=vg, callback=record, max_steps=config.steps)
        return kf.moments, np.zeros(grid.n_cells), rows, len(rows) - 1, rows[-1][0], {}
    solver = fluid if config.solver == "euler" else MusclRelaxedSolver()
    U, t, k = U0, 0.0, 0
    while not done(t, k):
        dt = solver.max_dt(U, grid)
        if config.steps is None:
            dt = min(dt, tf - t)
        U = solver.step(U, dt, grid)
        t += dt
        k += 1
        rows.append([t, 0, *(U.sum(axis=1) * grid.dx)])
    return U, np.ones(grid.n_cells), rows, k, t, {}


def run(config: RunConfig) -> RunReport:
    """Run one configuration; writes CSV/JSON outputs when ``config.out`` is set."""
    sc = build_scenario(config.scenario, config.cells)
    tf = sc.t_final if config.tfinal is None else config.tfinal
    t0 = time.perf_counter()
    U, beta, rows, steps, t, diagnostics = _simulate(config, sc, tf)
    wall = time.perf_counter() - t0
    grid = sc.grid
    errors, U_ref = None, None
    if config.reference == "dvm":
        U_ref = load_reference(config, grid.n_cells, t)
        errors = l1_from_fields(primitive_fields(U), primitive_fields(U_ref), grid.dx)
    report = RunReport(asdict(config), config.seed, grid.centers, U, beta, np.asarray(rows, dtype=float),
                       errors, steps, t, diagnostics, U_ref, wall)
    if config.out:
        write_report(report, config.out)
    return report


def write_report(report: RunReport, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_profile(out / "profile.csv", report.x, report.U, report.beta)
    ts = report.timeseries
    io.write_csv(out / "timeseries.csv", io.TIMESERIES_COLUMNS,
                 ([r[0], int(r[1]), r[2], r[3], r[4]] for r in ts))
    if report.errors is not None:
        io.write_csv(out / "errors.csv", ("field", "l1_error"), ((k, report.errors[k]) for k in FIELDS))
        io.write_profile(out / "reference.csv", report.x, report.reference_U, np.zeros(report.x.size))
    io.write_json(out / "report.json", report.summary())


# ---------------------------------------------------------------- sweeps


def parse_sweep(text: str) -> list[dict]:
    """Flat ``key = value`` lines; comma-separated values span a cartesian product."""
    axes = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        axes[key.replace("-", "_")] = [v.strip() for v in val.split(",") if v.strip()]
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def _run_entry(raw: dict) -> RunReport:
    return run(coerce_config(raw))


def bench(sweep, out: str | None = None, jobs: int = 1) -> list[RunReport]:
    """Run every configuration of a sweep; ``sweep`` is file text or a list of dicts."""
    entries = parse_sweep(sweep) if isinstance(sweep, str) else list(sweep)
    varied = [k for k in (entries[0] if entries else {}) if len({e[k] for e in entries}) > 1]
    if out:
        for e in entries:
            tag = "_".join(f"{k}-{e[k]}" for k in varied) or "run"
            e.setdefault("out", str(Path(out) / tag))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_entry, entries))
    else:
        reports = [_run_entry(e) for e in entries]
    if out:
        rows = []
        for r in reports:
            c = r.config
            errs = r.errors or dict.fromkeys(FIELDS, float("nan"))
            rows.append([c["scenario"], c["solver"], c["epsilon"], c["seed"], *(errs[k] for k in FIELDS)])
        io.write_csv(Path(out) / "bench.csv", ("scenario", "solver", "epsilon", "seed", *FIELDS), rows)
    return reports


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **kw)
