"""Monte Carlo particle state and kinetics for the 1-D BGK equation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid1D, InvalidStateError, cell_averages, primitives_from_conserved
from .sampling import RngStream, as_generator, group_moment_match, iround, standard_normal

SIDES = ("left", "right")


@dataclass
class ParticleBuffer:
    """Structure-of-arrays particle storage with a uniform particle mass.

    ``tagged`` marks particles sampled from the Maxwellian during the current
    step; it is cleared when a step finishes.
    """

    x: np.ndarray
    v: np.ndarray
    mp: float
    tagged: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.tagged is None:
            self.tagged = np.zeros(self.x.size, dtype=bool)
        if not self.mp > 0:
            raise ValueError("particle mass must be positive")

    @property
    def size(self) -> int:
        return self.x.size

    def copy(self) -> "ParticleBuffer":
        return ParticleBuffer(self.x.copy(), self.v.copy(), self.mp, self.tagged.copy())

    def take(self, sel) -> "ParticleBuffer":
        return ParticleBuffer(self.x[sel], self.v[sel], self.mp, self.tagged[sel])

    def extend(self, x, v, tagged: bool = False) -> None:
        self.x = np.concatenate([self.x, x])
        self.v = np.concatenate([self.v, v])
        self.tagged = np.concatenate([self.tagged, np.full(np.size(x), tagged)])

    def clear_tags(self) -> None:
        self.tagged[:] = False


@dataclass
class CellIndex:
    """Particles sorted by cell: ``order`` is a permutation, ``offsets`` the cell starts."""

    cell: np.ndarray
    order: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray

    @classmethod
    def build(cls, x, grid: Grid1D) -> "CellIndex":
        cell = grid.cell_of(x)
        order = np.argsort(cell, kind="stable")
        counts = np.bincount(cell, minlength=grid.n_cells)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(cell, order, counts, offsets)

    def members(self, i: int) -> np.ndarray:
        return self.order[self.offsets[i]:self.offsets[i + 1]]


def cell_moments(cell, v, n_cells: int, mp: float, dx: float) -> np.ndarray:
    """``(3, n_cells)`` moments of particles binned by ``cell``."""
    w = mp / dx
    return np.stack([
        w * np.bincount(cell, minlength=n_cells).astype(np.float64),
        w * np.bincount(cell, weights=v, minlength=n_cells),
        w * 0.5 * np.bincount(cell, weights=v * v, minlength=n_cells),
    ])


def sample_in_cells(counts, U, grid: Grid1D, rng, match: bool = False):
    """Sample ``counts[i]`` particles from the Maxwellian of ``U[:, i]``.

    Positions are uniform in each cell. Cells with zero count may hold any
    state; a non-zero count in a vacuum cell raises :class:`InvalidStateError`.
    """
    gen = as_generator(rng)
    counts = np.asarray(counts, dtype=np.int64)
    need = counts > 0
    rho = np.where(need & (U[0] > 0), U[0], 1.0)
    u = np.where(need, U[1] / rho, 0.0)
    T = np.where(need, 2.0 * U[2] / rho - u * u, 1.0)
    bad = need & ~((U[0] > 0) & (T > 0))
    if np.any(bad):
        raise InvalidStateError("Maxwellian requested for a vacuum or cold cell", int(np.flatnonzero(bad)[0]))
    cell = np.repeat(np.arange(grid.n_cells), counts)
    x = grid.x_min + (cell + gen.random(cell.size)) * grid.dx
    v = u[cell] + np.sqrt(T[cell]) * standard_normal(gen, cell.size)
    if match:
        v, _ = group_moment_match(v, cell, grid.n_cells, u, u * u + T)
    return x, v, cell


def init_particles(profile, n_total: int, grid: Grid1D, rng, method: str = "iid",
                   match: bool = True) -> ParticleBuffer:
    """Sample particles from the local-Maxwellian initial datum ``profile``.

    ``profile(x)`` returns ``(rho, rho*u, E)`` at points ``x``. The particle
    mass is ``m_p = (integral of rho) / n_total``.

    ``method="iid"`` draws positions and velocities i.i.d. from ``f0``.
    ``method="stratified"`` puts ``iround(rho_i dx / m_p)`` particles in each
    cell and, when ``match`` is set, moment-matches their velocities to the
    cell-averaged moments, which removes most of the initial sampling noise.
    """
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    gen = as_generator(rng)
    Ubar = cell_averages(profile, grid)
    mass = Ubar[0].sum() * grid.dx
    mp = mass / n_total
    if method == "stratified":
        counts = iround(Ubar[0] * grid.dx / mp, gen)
        x, v, _ = sample_in_cells(counts, Ubar, grid, gen, match=match)
        return ParticleBuffer(x, v, mp)
    if method != "iid":
        raise ValueError(f"unknown init method {method!r}")
    probe = np.linspace(grid.x_min, grid.x_max, 20 * grid.n_cells + 1)
    rho_max = 1.05 * np.max(np.asarray(profile(probe))[0])
    xs = []
    have = 0
    while have < n_total:
        cand = grid.x_min + gen.random(2 * (n_total - have) + 16) * grid.length
        acc = gen.random(cand.size) * rho_max < np.asarray(profile(cand))[0]
        xs.append(cand[acc])
        have += int(acc.sum())
    x = np.concatenate(xs)[:n_total]
    rho, u, T, _ = primitives_from_conserved(np.asarray(profile(x)))
    v = u + np.sqrt(T) * standard_normal(gen, n_total)
    return ParticleBuffer(x, v, mp)


def transport_particles(buffer: ParticleBuffer, dt: float) -> ParticleBuffer:
    """Free flight ``p <- p + v dt`` for every particle (in place)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    buffer.x += buffer.v * dt
    return buffer


@dataclass
class Reservoir:
    """An equilibrium gas beyond one boundary that feeds particles into the domain."""

    state: np.ndarray  # (rho, rho*u, E)
    tagged: bool = False


def inject_from_reservoir(res: Reservoir, side: str, grid: Grid1D, mp: float, dt: float, rng):
    """Particles entering the domain from a reservoir during one step.

    A ghost layer of width ``(|u| + 6 sqrt(T)) dt`` outside the boundary is
    filled with ``iround(rho * width / m_p)`` particles from the reservoir
    Maxwellian, moved for ``dt``, and those that end up inside are returned.
    In expectation this is exactly the half-range Maxwellian influx
    ``dt * integral over inward v of |v| M(v) dv``, up to the 6-sigma cutoff.
    """
    rho, mom, energy = (float(s) for s in res.state)
    if rho <= 0 or dt <= 0:
        return np.empty(0), np.empty(0)
    u = mom / rho
    T = 2.0 * energy / rho - u * u
    if T <= 0:
        raise InvalidStateError(f"cold reservoir on the {side} side")
    gen = as_generator(rng)
    width = (abs(u) + 6.0 * np.sqrt(T)) * dt
    n = iround(rho * width / mp, gen)
    depth = gen.random(n) * width
    v = u + np.sqrt(T) * standard_normal(gen, n)
    if side == "right":
        x = grid.x_max + depth + v * dt
        inside = x < grid.x_max
    else:
        x = grid.x_min - depth + v * dt
        inside = x >= grid.x_min
    inside &= (x >= grid.x_min) & (x < grid.x_max)
    return x[inside], v[inside]


def apply_boundaries(buffer: ParticleBuffer, grid: Grid1D, rng=None, dt: float = 0.0,
                     reservoirs: dict | None = None) -> ParticleBuffer:
    """Apply boundary conditions after a transport step (in place).

    periodic: positions wrap modulo the domain length.
    specular: escaped particles get ``(p, v) <- (2 x_b - p, -v)``.
    inflow / free_flow: escaped particles are removed and new particles are
    injected from the side's reservoirs. ``reservoirs`` maps a side to a list
    of :class:`Reservoir`; inflow sides default to the grid's reservoir
    state, free_flow sides have no default (the caller supplies the edge
    state).
    """
    if grid.periodic:
        buffer.x = grid.x_min + np.mod(buffer.x - grid.x_min, grid.length)
        # np.mod can round up to the length itself
        buffer.x[buffer.x >= grid.x_max] = grid.x_min
        return buffer
    for _ in range(4):
        moved = False
        for side, bnd in (("left", grid.left), ("right", grid.right)):
            out = buffer.x < grid.x_min if side == "left" else buffer.x >= grid.x_max
            if not np.any(out):
                continue
            moved = True
            if bnd.kind == "specular":
                wall = grid.x_min if side == "left" else grid.x_max
                buffer.x[out] = 2.0 * wall - buffer.x[out]
                buffer.v[out] = -buffer.v[out]
                if side == "right":
                    # exactly on the wall after reflection belongs to the last cell
                    buffer.x[out & (buffer.x >= grid.x_max)] = np.nextafter(grid.x_max, grid.x_min)
            else:
                keep = ~out
                buffer.x, buffer.v, buffer.tagged = buffer.x[keep], buffer.v[keep], buffer.tagged[keep]
        if not moved:
            break
    if dt > 0:
        gen = as_generator(rng)
        reservoirs = dict(reservoirs or {})
        for side, bnd in (("left", grid.left), ("right", grid.right)):
            if side not in reservoirs and bnd.kind == "inflow":
                reservoirs[side] = [Reservoir(np.asarray(bnd.state, dtype=float))]
            if bnd.kind not in ("inflow", "free_flow"):
                continue
            for res in reservoirs.get(side, []):
                x, v = inject_from_reservoir(res, side, grid, buffer.mp, dt, gen)
                buffer.extend(x, v, tagged=res.tagged)
    return buffer


def thin_groups(cell, n_groups: int, keep_counts, rng) -> np.ndarray:
    """Boolean mask keeping ``keep_counts[g]`` members of each group, uniformly without replacement."""
    gen = as_generator(rng)
    cell = np.asarray(cell)
    keys = gen.random(cell.size)
    order = np.lexsort((keys, cell))
    counts = np.bincount(cell, minlength=n_groups)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.empty(cell.size, dtype=np.int64)
    rank[order] = np.arange(cell.size) - starts[cell[order]]
    return rank < np.asarray(keep_counts)[cell]


def relaxation_discard(particles, lam: float, rng) -> np.ndarray:
    """Keep ``iround(lam * N)`` of the given particles, chosen uniformly without replacement."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    p = np.asarray(particles)
    gen = as_generator(rng)
    k = iround(lam * p.size, gen)
    if k >= p.size:
        return p.copy()
    sel = gen.choice(p.size, size=k, replace=False)
    return p[np.sort(sel)]


@dataclass
class McmState:
    """State of the pure Monte Carlo solver."""

    grid: Grid1D
    particles: ParticleBuffer
    t: float = 0.0
    step: int = 0
    diagnostics: dict = field(default_factory=lambda: {"unmatched_cells": 0})

    @property
    def U(self) -> np.ndarray:
        cell = self.grid.cell_of(self.particles.x)
        return cell_moments(cell, self.particles.v, self.grid.n_cells, self.particles.mp, self.grid.dx)

    @property
    def beta(self) -> np.ndarray:
        return np.zeros(self.grid.n_cells)


def edge_reservoirs(grid: Grid1D, U: np.ndarray, fraction=(1.0, 1.0), tagged: bool = False) -> dict:
    """Reservoirs for free_flow sides built from the edge cells of ``U``."""
    out = {}
    for k, (side, bnd) in enumerate((("left", grid.left), ("right", grid.right))):
        if bnd.kind == "free_flow":
            edge = U[:, 0] if side == "left" else U[:, -1]
            if edge[0] > 0 and 2.0 * edge[2] * edge[0] - edge[1] ** 2 > 0:
                out[side] = [Reservoir(fraction[k] * edge, tagged)]
    return out


def mcm_step(state: McmState, dt: float, eps: float, rng: RngStream, matching: bool = True) -> McmState:
    """One pure Monte Carlo step: free transport with boundaries, then BGK relaxation.

    Each particle's velocity is replaced, with probability ``1 - exp(-dt/eps)``,
    by a draw from its cell's Maxwellian. With ``matching`` the redrawn subset is
    affinely rescaled so the cell keeps its momentum and energy exactly.
    """
    grid = state.grid
    buf = state.particles
    lam = float(np.exp(-dt / eps))
    base = rng.child(state.step)
    reservoirs = edge_reservoirs(grid, state.U) if not grid.periodic else None
    transport_particles(buf, dt)
    apply_boundaries(buf, grid, base.child(0), dt, reservoirs)

    n = grid.n_cells
    cell = grid.cell_of(buf.x)
    count = np.bincount(cell, minlength=n).astype(np.float64)
    safe = np.maximum(count, 1.0)
    s1 = np.bincount(cell, weights=buf.v, minlength=n)
    s2 = np.bincount(cell, weights=buf.v * buf.v, minlength=n)
    u = s1 / safe
    T = s2 / safe - u * u
    live = (count >= 2) & (T > 0)
    gen = base.child(1).generator()
    redraw = (gen.random(buf.size) >= lam) & live[cell]
    v_old = buf.v.copy()
    v_new = buf.v.copy()
    c = cell[redraw]
    v_new[redraw] = u[c] + np.sqrt(np.where(live[c], T[c], 0.0)) * standard_normal(gen, int(redraw.sum()))
    if matching:
        kept = ~redraw
        nr = np.bincount(c, minlength=n).astype(np.float64)
        r1 = (s1 - np.bincount(cell[kept], weights=v_old[kept], minlength=n)) / np.maximum(nr, 1.0)
        r2 = (s2 - np.bincount(cell[kept], weights=v_old[kept] ** 2, minlength=n)) / np.maximum(nr, 1.0)
        matched_v, ok = group_moment_match(v_new[redraw], c, n, r1, r2)
        v_new[redraw] = matched_v
        # cells where the redrawn subset cannot carry the deficit: match the whole cell
        bad = live & (nr > 0) & ~ok
        if np.any(bad):
            whole, ok2 = group_moment_match(v_new, cell, n, u, s2 / safe, active=bad)
            sel = bad[cell]
            v_new[sel] = whole[sel]
            revert = bad & ~ok2
            v_new[revert[cell]] = v_old[revert[cell]]
            state.diagnostics["unmatched_cells"] += int(revert.sum())
    buf.v = v_new
    buf.clear_tags()
    state.t += dt
    state.step += 1
    return state
