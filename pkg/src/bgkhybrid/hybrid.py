"""Fluid-solver-independent hybrid particle/fluid steppers for the BGK equation.

The state holds, per cell, an equilibrium fraction ``beta`` and the hybrid
moments ``U``. The distribution is represented as the convex combination of
a particle cloud carrying the moments ``(1 - beta) U`` and a local
Maxwellian carrying ``beta U``. The Maxwellian part is advanced by any
:class:`~bgkhybrid.euler.FluidSolverInterface`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Grid1D, InvalidStateError, cell_averages, primitives_from_conserved
from .euler import FluidSolverInterface, SolverFailure
from .particles import (
    ParticleBuffer,
    Reservoir,
    apply_boundaries,
    cell_moments,
    sample_in_cells,
    thin_groups,
    transport_particles,
)
from .sampling import (
    RngStream,
    acceptance_sample,
    as_generator,
    group_moment_match,
    iround,
    log_ratio_min,
)

COUNTERS = ("clamp_count", "deficit_count", "matching_fallbacks", "topups", "dissolved", "capped")


def compute_lambda(dt: float, eps: float) -> float:
    """Survival factor ``exp(-dt/eps)`` of the exact relaxation step."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    return float(np.exp(-dt / eps))


@dataclass(frozen=True)
class FsiConfig:
    """Options of the hybrid steppers.

    ``lambda_bar`` is the fraction of the Maxwellian part turned into
    particles before transport: ``"lambda"`` uses the relaxation factor,
    a number fixes it. The optimized variant always samples the full part.
    ``beta_estimator`` is ``"bound"``, ``"reconstruction"`` or ``"zero"``
    (no optimization, for testing).
    """

    variant: str = "fsi"
    matching: bool = True
    lambda_bar: object = "lambda"
    fluid_solver: str = "muscl_relaxed"
    beta_estimator: str = "bound"
    recon_bins: int = 24
    nu_max_with_u: bool = False

    def __post_init__(self):
        if self.variant not in ("fsi", "fsi1"):
            raise ValueError(f"unknown hybrid variant {self.variant!r}")
        if self.beta_estimator not in ("bound", "reconstruction", "zero"):
            raise ValueError(f"unknown beta estimator {self.beta_estimator!r}")
        if self.beta_estimator != "bound" and self.variant != "fsi1":
            raise ValueError("beta estimators other than the bound only apply to fsi1")

    def lam_bar(self, lam: float) -> float:
        if self.variant == "fsi1":
            return 1.0
        if self.lambda_bar == "lambda":
            return lam
        lb = float(self.lambda_bar)
        if not 0.0 <= lb <= 1.0:
            raise ValueError("lambda_bar must lie in [0, 1]")
        return lb


@dataclass(frozen=True)
class BetaEstimate:
    beta_c: np.ndarray
    estimator: str

    def __post_init__(self):
        if np.any(self.beta_c < 0) or np.any(self.beta_c > 1):
            raise ValueError("beta_c must lie in [0, 1]")


@dataclass
class HybridState:
    grid: Grid1D
    particles: ParticleBuffer
    beta: np.ndarray
    U: np.ndarray
    t: float = 0.0
    step: int = 0
    diagnostics: dict = field(default_factory=lambda: dict.fromkeys(COUNTERS, 0))
    records: list = field(default_factory=list)

    @property
    def mp(self) -> float:
        return self.particles.mp

    def particle_moments(self) -> np.ndarray:
        g = self.grid
        return cell_moments(g.cell_of(self.particles.x), self.particles.v, g.n_cells, self.mp, g.dx)

    def totals(self) -> np.ndarray:
        """Domain totals of the represented distribution: particles plus ``beta U``."""
        return (self.particle_moments() + self.beta * self.U).sum(axis=1) * self.grid.dx


# ---------------------------------------------------------------- helpers


def _safe_primitives(U):
    """``(rho, u, T)`` with vacuum cells mapped to ``(0, 0, 1)``."""
    rho = U[0]
    live = rho > 0
    safe = np.where(live, rho, 1.0)
    u = np.where(live, U[1] / safe, 0.0)
    T = np.where(live, 2.0 * U[2] / safe - u * u, 1.0)
    if np.any(live & ~(T > 0)):
        raise InvalidStateError("non-positive temperature", int(np.flatnonzero(live & ~(T > 0))[0]))
    return np.where(live, rho, 0.0), u, T


def _extended_maxwellians(beta, U, grid: Grid1D, depth: int, inflow_beta=None):
    """Weighted Maxwellians ``beta_j M_j`` on cells ``-depth .. n+depth-1``.

    Returns ``(log_weight_rho, u, T)`` where ``log_weight_rho = log(beta_j rho_j)``
    (``-inf`` for empty cells). Ghost cells follow the boundary kinds:
    periodic wraps, specular mirrors with the velocity negated, inflow uses
    the edge fraction of the reservoir and free_flow repeats the edge cell.
    """
    n = grid.n_cells
    rho, u, T = _safe_primitives(U)
    with np.errstate(divide="ignore"):
        lw = np.log(beta * rho)
    idx = np.arange(-depth, n + depth)
    if grid.periodic:
        j = np.mod(idx, n)
        return lw[j], u[j], T[j]
    out_lw = np.empty(idx.size)
    out_u = np.empty(idx.size)
    out_T = np.empty(idx.size)
    inside = (idx >= 0) & (idx < n)
    out_lw[inside], out_u[inside], out_T[inside] = lw[idx[inside]], u[idx[inside]], T[idx[inside]]
    for side, bnd in (("left", grid.left), ("right", grid.right)):
        sel = idx < 0 if side == "left" else idx >= n
        edge = 0 if side == "left" else n - 1
        if bnd.kind == "specular":
            j = -1 - idx[sel] if side == "left" else 2 * n - 1 - idx[sel]
            j = np.clip(j, 0, n - 1)
            out_lw[sel], out_u[sel], out_T[sel] = lw[j], -u[j], T[j]
        elif bnd.kind == "inflow":
            r_rho, r_u, r_T, _ = primitives_from_conserved(np.asarray(bnd.state, dtype=float))
            b = beta[edge] if inflow_beta is None else inflow_beta[0 if side == "left" else 1]
            with np.errstate(divide="ignore"):
                out_lw[sel] = np.log(b * r_rho)
            out_u[sel], out_T[sel] = r_u, r_T
        else:
            out_lw[sel], out_u[sel], out_T[sel] = lw[edge], u[edge], T[edge]
    return out_lw, out_u, out_T


def _log_maxwellian(lw, u, T, v):
    return lw - 0.5 * np.log(2.0 * np.pi * T) - (v - u) ** 2 / (2.0 * T)


def transported_maxwellian_logdensity(v, cell, beta, U, grid: Grid1D, dt: float):
    """Log of the upwind-transported weighted Maxwellian in ``cell`` at velocity ``v``.

    A node moving ``s = |v| dt / dx`` cells comes from the two upwind cells
    ``floor(s)`` and ``floor(s) + 1`` away, with weights ``1 - frac(s)`` and
    ``frac(s)``. For ``|v| dt <= dx`` this is the first-order upwind update.
    """
    v = np.asarray(v, dtype=np.float64)
    cell = np.asarray(cell)
    s = np.abs(v) * dt / grid.dx
    k = np.floor(s).astype(np.int64)
    frac = s - k
    depth = int(k.max(initial=0)) + 2
    lw, u, T = _extended_maxwellians(beta, U, grid, depth)
    sgn = np.where(v >= 0, -1, 1)
    j0 = cell + sgn * k + depth
    j1 = j0 + sgn
    with np.errstate(divide="ignore"):
        a = np.log1p(-frac) + _log_maxwellian(lw[j0], u[j0], T[j0], v)
        b = np.log(frac) + _log_maxwellian(lw[j1], u[j1], T[j1], v)
    return np.logaddexp(a, b)


def estimate_beta_c_bound(beta, U_old, U_new, dt: float, grid: Grid1D, inflow_beta=None) -> BetaEstimate:
    """Lower bound on the equilibrium fraction kept by the transported Maxwellian.

    With ``v_bound = dx/dt`` the upwind-transported ``beta M`` in cell ``i``
    is a convex combination of ``beta_i M_i`` and ``beta_{i-1} M_{i-1}`` for
    ``0 <= v <= v_bound`` and of cells ``i``, ``i+1`` for ``-v_bound <= v < 0``.
    The ratio to the new Maxwellian is therefore bounded below by the smallest
    exact ratio minimum of those terms.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = grid.n_cells
    vb = grid.dx / dt
    lw, u, T = _extended_maxwellians(beta, U_old, grid, 1, inflow_beta)
    rho_h, u_h, T_h = _safe_primitives(U_new)
    live = rho_h > 0
    rho_h = np.where(live, rho_h, 1.0)
    c = np.arange(n) + 1

    def term(j, lo, hi):
        wr = np.exp(lw[j])
        lm, _ = log_ratio_min(np.where(wr > 0, wr, 1.0), u[j], T[j], rho_h, u_h, T_h, lo, hi)
        return np.where(wr > 0, np.exp(lm), 0.0)

    right = np.minimum(term(c, 0.0, vb), term(c - 1, 0.0, vb))
    left = np.minimum(term(c, -vb, 0.0), term(c + 1, -vb, 0.0))
    beta_c = np.clip(np.minimum(right, left), 0.0, 1.0)
    return BetaEstimate(np.where(live, beta_c, 0.0), "bound")


def estimate_beta_c_reconstruction(v, cell, U_new, mp: float, grid: Grid1D, edges) -> BetaEstimate:
    """Equilibrium fraction from a histogram of the transported Maxwellian samples.

    ``v`` and ``cell`` describe the tagged particles after transport; ``edges``
    is the velocity binning. Per cell the estimate is the smallest ratio of
    the histogram density to the new Maxwellian over occupied bins. Noisy for
    small samples; intended as a cross-check of the bound.
    """
    n = grid.n_cells
    edges = np.asarray(edges, dtype=np.float64)
    nb = edges.size - 1
    b = np.searchsorted(edges, v, side="right") - 1
    inside = (b >= 0) & (b < nb)
    hist = np.bincount(cell[inside] * nb + b[inside], minlength=n * nb).reshape(n, nb)
    width = np.diff(edges)
    dens = hist * mp / (grid.dx * width)
    rho_h, u_h, T_h = _safe_primitives(U_new)
    centers = 0.5 * (edges[:-1] + edges[1:])
    MH = rho_h[:, None] / np.sqrt(2 * np.pi * T_h[:, None]) * np.exp(-((centers - u_h[:, None]) ** 2) / (2 * T_h[:, None]))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hist > 0, dens / MH, np.inf)
    beta_c = ratio.min(axis=1)
    beta_c = np.where(np.isfinite(beta_c) & (rho_h > 0), beta_c, 0.0)
    return BetaEstimate(np.clip(beta_c, 0.0, 1.0), "reconstruction")


def _cell_sums(cell, v, n):
    return (
        np.bincount(cell, minlength=n).astype(np.int64),
        np.bincount(cell, weights=v, minlength=n),
        np.bincount(cell, weights=v * v, minlength=n),
    )


def _sort_by_cell(x, v, cell):
    order = np.argsort(cell, kind="stable")
    return x[order], v[order], cell[order]


def _close_cells(surv, fresh, U_new, grid: Grid1D, mp: float, rng: RngStream, diag: dict, matching: bool):
    """Build the new particle pool and the equilibrium fraction.

    ``surv`` and ``fresh`` are ``(x, v, cell)`` triples. With matching, the
    fresh particles are rescaled so the whole pool carries ``lam_p * U_new``
    exactly, where ``lam_p`` is the pool mass over the cell mass. Cells where
    that fails fall back to matching the whole pool; a lone particle gets a
    partner from the cell Maxwellian when there is room, otherwise the cell's
    particles are dissolved into the fluid part.
    """
    n = grid.n_cells
    rho = U_new[0]
    cap = np.where(rho > 0, np.floor(rho * grid.dx / mp), 0).astype(np.int64)
    xs, vs, cs = surv
    xf, vf, cf = fresh
    nk = np.bincount(cs, minlength=n)
    nf = np.bincount(cf, minlength=n)
    room = np.maximum(cap - nk, 0)
    if np.any(nf > room):
        keep = thin_groups(cf, n, np.minimum(nf, room), rng.child(0))
        diag["capped"] += int(np.count_nonzero(nf > room))
        xf, vf, cf = xf[keep], vf[keep], cf[keep]
        nf = np.bincount(cf, minlength=n)
    if matching:
        rho_s, u, T = _safe_primitives(U_new)
        m2 = u * u + T
        npool = nk + nf
        lone = (npool == 1) & (cap >= 2)
        if np.any(lone):
            diag["topups"] += int(lone.sum())
            x_add, v_add, c_add = sample_in_cells(lone.astype(np.int64), np.where(lone, U_new, 1.0), grid, rng.child(1))
            xf, vf, cf = np.concatenate([xf, x_add]), np.concatenate([vf, v_add]), np.concatenate([cf, c_add])
            nf = nf + lone
            npool = nk + nf
        _, s1k, s2k = _cell_sums(cs, vs, n)
        safe_nf = np.maximum(nf, 1)
        m1f = (npool * u - s1k) / safe_nf
        m2f = (npool * m2 - s2k) / safe_nf
        vf, ok = group_moment_match(vf, cf, n, m1f, m2f, active=(nf >= 2) & ~lone)
        whole = (npool >= 2) & ~ok
        whole_fail = np.zeros(n, dtype=bool)
        if np.any(whole):
            diag["matching_fallbacks"] += int(np.count_nonzero(whole & ~lone))
            c_all = np.concatenate([cs, cf])
            v_all, ok2 = group_moment_match(np.concatenate([vs, vf]), c_all, n, u, m2, active=whole)
            vs, vf = v_all[: vs.size], v_all[vs.size:]
            whole_fail = whole & ~ok2
        dissolve = (npool == 1) | whole_fail
        if np.any(dissolve):
            diag["dissolved"] += int(dissolve.sum())
            ks, kf = ~dissolve[cs], ~dissolve[cf]
            xs, vs, cs = xs[ks], vs[ks], cs[ks]
            xf, vf, cf = xf[kf], vf[kf], cf[kf]
    x = np.concatenate([xs, xf])
    v = np.concatenate([vs, vf])
    c = np.concatenate([cs, cf])
    npool = np.bincount(c, minlength=n)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(rho > 0, 1.0 - npool * mp / (rho * grid.dx), 0.0)
    return x, v, np.clip(beta, 0.0, 1.0)


# ---------------------------------------------------------------- setup


def initialize_hybrid(scenario, n_total: int, eps: float, dt: float, rng, method: str = "stratified",
                      config: FsiConfig | None = None) -> HybridState:
    """Initial hybrid state for a scenario with ``profile`` and ``grid`` attributes.

    The cell moments are the exact cell averages of the initial profile and
    ``m_p`` is the total mass over ``n_total``. Each cell would hold
    ``floor(rho_i dx / m_p)`` particles; the first relaxation is applied at
    once, so only ``iround(lam_bar * N_i)`` are drawn and the rest of the mass
    starts in the Maxwellian part, ``beta_i = 1 - N_i^k m_p / (rho_i dx)``.
    ``method="iid"`` draws positions from the density instead of per cell.
    """
    config = config or FsiConfig()
    grid = scenario.grid
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    U = cell_averages(scenario.profile, grid)
    primitives_from_conserved(U)
    mp = U[0].sum() * grid.dx / n_total
    lam = compute_lambda(dt, eps)
    # the first relaxation: fsi1 keeps lam of the particles, fsi its lam_bar sampling fraction
    thin = lam if config.variant == "fsi1" else config.lam_bar(lam)
    full = np.floor(U[0] * grid.dx / mp).astype(np.int64)
    gen = stream.child(0).generator()
    if method == "stratified":
        nk = np.minimum(iround(thin * full, gen), full)
        x, v, c = sample_in_cells(nk, U, grid, gen)
    elif method == "iid":
        from .particles import init_particles

        buf = init_particles(scenario.profile, n_total, grid, gen, method="iid")
        c = grid.cell_of(buf.x)
        counts = np.bincount(c, minlength=grid.n_cells)
        target = np.minimum(iround(thin * counts, gen), full)
        keep = thin_groups(c, grid.n_cells, target, gen)
        x, v, c = buf.x[keep], buf.v[keep], c[keep]
    else:
        raise ValueError(f"unknown init method {method!r}")
    diag = dict.fromkeys(COUNTERS, 0)
    empty = (np.empty(0), np.empty(0), np.empty(0, dtype=np.int64))
    x, v, beta = _close_cells((x, v, c), empty, U, grid, mp, stream.child(1), diag, config.matching)
    state = HybridState(grid, ParticleBuffer(x, v, mp), beta, U, diagnostics=diag)
    _record(state)
    return state


def stable_dt(U, grid: Grid1D, solver: FluidSolverInterface, include_u: bool = False) -> float:
    """``min(dx / nu_max, fluid max_dt)`` with ``nu_max = 4 sqrt(2 T_max)``.

    ``include_u`` adds the largest bulk speed to ``nu_max``.
    """
    _, u, T, _ = primitives_from_conserved(U)
    nu = 4.0 * np.sqrt(2.0 * float(T.max()))
    if include_u:
        nu += float(np.abs(u).max())
    return min(grid.dx / nu, solver.max_dt(U, grid))


def hybrid_dt(state: HybridState, solver: FluidSolverInterface, include_u: bool = False) -> float:
    return stable_dt(state.U, state.grid, solver, include_u)


# ---------------------------------------------------------------- steps


def _record(state: HybridState):
    state.records.append({
        "step": state.step,
        "t": state.t,
        "n_particles": state.particles.size,
        "beta": state.beta.copy(),
        **{k: state.diagnostics[k] for k in COUNTERS},
    })


def _boundary_reservoirs(state: HybridState, lam_bar: float, n_part: np.ndarray):
    """Untagged and tagged reservoirs for inflow and free_flow sides."""
    grid = state.grid
    out = {}
    for side, bnd in (("left", grid.left), ("right", grid.right)):
        if bnd.kind not in ("inflow", "free_flow"):
            continue
        e = 0 if side == "left" else grid.n_cells - 1
        b = state.beta[e]
        if bnd.kind == "inflow":
            res = np.asarray(bnd.state, dtype=float)
            part = (1.0 - b) * res
        else:
            res = state.U[:, e]
            part = n_part[:, e]
        out[side] = [r for r in (Reservoir(part, False), Reservoir(lam_bar * b * res, True)) if _injectable(r.state)]
    return out


def _injectable(U) -> bool:
    rho, mom, energy = U
    return rho > 0 and 2.0 * energy * rho - mom * mom > 0


def _fluid_stage(state: HybridState, dt: float, solver: FluidSolverInterface):
    grid = state.grid
    if not np.any(state.beta > 0):
        return np.zeros_like(state.U)
    fluid_grid = grid.scaled_inflow(state.beta[0], state.beta[-1])
    return solver.step(state.beta * state.U, dt, fluid_grid)


def _transport_stage(state: HybridState, dt: float, lam_bar: float, stream: RngStream):
    """Sample the tagged Maxwellian particles, transport everything and return the split sets."""
    grid = state.grid
    buf = state.particles
    buf.clear_tags()
    n_part = state.particle_moments()
    counts = iround(lam_bar * state.beta * np.maximum(state.U[0], 0.0) * grid.dx / buf.mp, stream.child(0))
    x_t, v_t, _ = sample_in_cells(counts, state.U, grid, stream.child(1))
    buf.extend(x_t, v_t, tagged=True)
    reservoirs = None if grid.periodic else _boundary_reservoirs(state, lam_bar, n_part)
    transport_particles(buf, dt)
    apply_boundaries(buf, grid, stream.child(2), dt, reservoirs)
    return buf


def fsi_step(state: HybridState, dt: float, eps: float, solver: FluidSolverInterface, rng: RngStream,
             config: FsiConfig | None = None) -> HybridState:
    """One step of the basic hybrid scheme.

    Only ``lam_bar`` of the Maxwellian part is sampled before transport.
    After transport the untagged particles give ``U^p``, the fluid solver
    advances ``beta U`` to ``U^E`` and the new hybrid moments are their sum.
    Relaxation keeps ``iround(lam N^p)`` untagged particles and
    ``iround(lam rho^E dx / m_p)`` tagged ones, topping up from the
    Maxwellian of ``U^E`` when too few tagged particles arrived.
    """
    config = replace(config or FsiConfig(), variant="fsi", beta_estimator="bound")
    return _hybrid_step(state, dt, eps, solver, rng, config)


def fsi1_step(state: HybridState, dt: float, eps: float, solver: FluidSolverInterface, rng: RngStream,
              config: FsiConfig | None = None) -> HybridState:
    """One step of the optimized scheme.

    The whole Maxwellian part is sampled and transported. After the fluid
    update the fraction ``beta_c`` of the new Maxwellian still contained in
    the transported one is estimated, and only the residual
    ``T(beta M) - beta_c M^H`` is turned into particles by acceptance-rejection
    from the transported samples. The equilibrium fraction then approaches
    ``1 - lam (1 - beta_c)`` regardless of the time step.
    """
    config = config or FsiConfig(variant="fsi1")
    if config.variant != "fsi1":
        raise ValueError("fsi1_step needs an fsi1 config")
    return _hybrid_step(state, dt, eps, solver, rng, config)


def hybrid_step(state, dt, eps, solver, rng, config: FsiConfig):
    return _hybrid_step(state, dt, eps, solver, rng, config)


def _hybrid_step(state: HybridState, dt: float, eps: float, solver: FluidSolverInterface, rng: RngStream,
                 config: FsiConfig) -> HybridState:
    grid = state.grid
    n = grid.n_cells
    mp = state.mp
    lam = compute_lambda(dt, eps)
    lam_bar = config.lam_bar(lam)
    stream = rng.child(state.step)
    beta_old, U_old = state.beta.copy(), state.U.copy()

    buf = _transport_stage(state, dt, lam_bar, stream.child(0))
    cell = grid.cell_of(buf.x)
    tag = buf.tagged
    U_p = cell_moments(cell[~tag], buf.v[~tag], n, mp, grid.dx)
    try:
        U_E = _fluid_stage(state, dt, solver)
    except SolverFailure as exc:
        raise SolverFailure(f"step {state.step}: {exc}") from exc
    U_new = U_p + U_E

    # relaxation of the untagged particles
    cu = cell[~tag]
    n_p = np.bincount(cu, minlength=n)
    keep = thin_groups(cu, n, iround(lam * n_p, stream.child(1)), stream.child(2))
    surv = (buf.x[~tag][keep], buf.v[~tag][keep], cu[keep])

    xt, vt, ct = _sort_by_cell(buf.x[tag], buf.v[tag], cell[tag])
    rho_E = np.maximum(U_E[0], 0.0)
    diag = state.diagnostics
    if config.variant == "fsi":
        want = iround(lam * rho_E * grid.dx / mp, stream.child(3))
        have = np.bincount(ct, minlength=n)
        sel = thin_groups(ct, n, np.minimum(want, have), stream.child(4))
        deficit = np.maximum(want - have, 0)
        fx, fv, fc = xt[sel], vt[sel], ct[sel]
        src_U = U_E
    else:
        if config.beta_estimator == "bound":
            est = estimate_beta_c_bound(beta_old, U_old, U_new, dt, grid)
        elif config.beta_estimator == "reconstruction":
            _, u_h, T_h = _safe_primitives(U_new)
            hw = 4.0 * np.sqrt(T_h.max())
            edges = np.linspace(u_h.min() - hw, u_h.max() + hw, config.recon_bins + 1)
            est = estimate_beta_c_reconstruction(vt, ct, U_new, mp, grid, edges)
        else:
            est = BetaEstimate(np.zeros(n), "zero")
        beta_c = est.beta_c
        resid = np.maximum(rho_E - beta_c * U_new[0], 0.0)
        want = iround(lam * resid * grid.dx / mp, stream.child(3))
        have = np.bincount(ct, minlength=n)
        if vt.size:
            log_src = transported_maxwellian_logdensity(vt, ct, beta_old, U_old, grid, dt)
            rho_h, u_h, T_h = _safe_primitives(U_new)
            log_h = _log_maxwellian(np.log(np.where(rho_h > 0, rho_h, 1.0))[ct], u_h[ct], T_h[ct], vt)
            with np.errstate(over="ignore"):
                raw = 1.0 - beta_c[ct] * np.exp(log_h - log_src)
            keep_p = np.clip(raw, 0.0, 1.0)
        else:
            raw = keep_p = np.empty(0)
        idx, _, ok, n_clamped = acceptance_sample(keep_p, have, want, stream.child(4), raw=raw)
        diag["clamp_count"] += n_clamped
        fx, fv, fc = xt[idx], vt[idx], ct[idx]
        deficit = np.where(ok, 0, want)
        R = U_E - beta_c * U_new
        rR = R[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            TR = 2.0 * R[2] / rR - (R[1] / rR) ** 2
        src_U = np.where((rR > 0) & (TR > 0), R, U_E)

    if np.any(deficit > 0):
        diag["deficit_count"] += int(np.count_nonzero(deficit))
        dx_, dv_, dc_ = sample_in_cells(deficit, np.where(deficit > 0, src_U, 1.0), grid, stream.child(5))
        fx, fv, fc = np.concatenate([fx, dx_]), np.concatenate([fv, dv_]), np.concatenate([fc, dc_])

    x, v, beta = _close_cells(surv, (fx, fv, fc), U_new, grid, mp, stream.child(6), diag, config.matching)
    state.particles = ParticleBuffer(x, v, mp)
    state.beta = beta
    state.U = U_new
    state.t += dt
    state.step += 1
    _record(state)
    return state


def kinetic_transport_moments(profile, x, dt: float, beta: float = 1.0, n_v: int = 4001, width: float = 12.0):
    """Moments after one free-transport step of the local Maxwellian of ``profile``.

    Returns ``(3, len(x))`` with ``integral of (1, v, v^2/2) beta M(x - v dt, v) dv``,
    computed by trapezoid quadrature on a dense velocity grid. This is the
    kinetic-scheme update whose one-step gap to the Euler solution is second
    order in ``dt``.
    """
    x = np.asarray(x, dtype=np.float64)
    _, u, T, _ = primitives_from_conserved(np.asarray(profile(x)))
    lo = float(np.min(u - width * np.sqrt(T)))
    hi = float(np.max(u + width * np.sqrt(T)))
    v = np.linspace(lo, hi, n_v)
    w = np.full(n_v, v[1] - v[0])
    w[[0, -1]] *= 0.5
    xs = (x[:, None] - v[None, :] * dt).ravel()
    rho_s, u_s, T_s, _ = primitives_from_conserved(np.asarray(profile(xs)))
    shape = (x.size, n_v)
    f = beta * rho_s.reshape(shape) / np.sqrt(2 * np.pi * T_s.reshape(shape)) * np.exp(
        -((v[None, :] - u_s.reshape(shape)) ** 2) / (2 * T_s.reshape(shape)))
    return np.stack([f @ w, f @ (w * v), f @ (0.5 * w * v * v)])
