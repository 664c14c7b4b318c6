"""Discrete-velocity reference solver for the 1-D BGK equation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid1D, InvalidStateError, eval_maxwellian, primitives_from_conserved

N_GHOST = 2


class CflError(ValueError):
    """The requested step would move the fastest node by more than the CFL limit."""


@dataclass(frozen=True)
class VelocityGrid:
    n_v: int = 64
    v_max: float = 10.0

    def __post_init__(self):
        if self.n_v < 3:
            raise ValueError("need at least three velocity nodes")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.n_v)

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.n_v - 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_v, self.dv)
        w[[0, -1]] *= 0.5
        return w


@dataclass
class KineticField:
    """``f[i, k]`` on cell ``i`` and velocity node ``k``."""

    f: np.ndarray
    vgrid: VelocityGrid

    @property
    def moments(self) -> np.ndarray:
        return dvm_moments(self.f, self.vgrid)


def dvm_moments(f, vgrid: VelocityGrid) -> np.ndarray:
    """Trapezoid moments ``(rho, rho u, E)`` of ``f``; returns ``(3, n_cells)``."""
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    v = vgrid.nodes
    w = vgrid.weights
    return np.stack([f @ w, f @ (w * v), f @ (0.5 * w * v * v)])


def discrete_maxwellian(U, vgrid: VelocityGrid, iters: int = 8, tol: float = 1e-14) -> np.ndarray:
    """Maxwellians on the nodes whose trapezoid moments equal ``U`` exactly.

    Starts from the continuous parameters and Newton-corrects ``(rho, u, T)``
    per cell until the discrete moments match. Returns ``(n_cells, n_v)``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=np.float64).T).T
    rho, u, T, _ = primitives_from_conserved(U)
    rho, u, T = (np.array(a, dtype=np.float64, ndmin=1) for a in (rho, u, T))
    v = vgrid.nodes[None, :]
    w = vgrid.weights
    phi = np.stack([np.ones_like(vgrid.nodes), vgrid.nodes, 0.5 * vgrid.nodes ** 2])  # (3, n_v)
    scale = np.maximum(np.abs(U), 1e-300)
    for _ in range(iters):
        M = eval_maxwellian((rho[:, None], u[:, None], T[:, None]), v)
        r = (M * w) @ phi.T - U.T  # (n, 3)
        if np.all(np.abs(r) <= tol * scale.T.max(axis=1, keepdims=True)):
            break
        d = v - u[:, None]
        dM = np.stack([
            M / rho[:, None],
            M * d / T[:, None],
            M * (d * d / (2.0 * T[:, None] ** 2) - 0.5 / T[:, None]),
        ], axis=-1)  # (n, n_v, 3)
        J = np.einsum("mk,nkj->nmj", phi * w, dM)
        step = np.linalg.solve(J, r[..., None])[..., 0]
        rho, u, T = rho - step[:, 0], u - step[:, 1], T - step[:, 2]
        if np.any(rho <= 0) or np.any(T <= 0):
            raise InvalidStateError("discrete Maxwellian correction failed; widen the velocity grid")
    return eval_maxwellian((rho[:, None], u[:, None], T[:, None]), v)


def _ghosts(f, grid: Grid1D, vgrid: VelocityGrid, reservoirs):
    g = N_GHOST
    out = np.empty((f.shape[0] + 2 * g, f.shape[1]))
    out[g:-g] = f
    if grid.periodic:
        out[:g] = f[-g:]
        out[-g:] = f[:g]
        return out
    for side, bnd in (("left", grid.left), ("right", grid.right)):
        if bnd.kind == "specular":
            # mirror in space and velocity; the node set is symmetric
            fill = f[:g][::-1, ::-1] if side == "left" else f[-g:][::-1, ::-1]
        elif bnd.kind == "inflow":
            fill = np.repeat(reservoirs[side], g, axis=0)
        else:
            fill = np.repeat(f[:1] if side == "left" else f[-1:], g, axis=0)
        if side == "left":
            out[:g] = fill
        else:
            out[-g:] = fill
    return out


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def dvm_transport(f, dt: float, grid: Grid1D, vgrid: VelocityGrid, reservoirs=None, cfl: float = 1.0):
    """Second-order limited upwind free transport of every velocity node."""
    v = vgrid.nodes
    nu = v * dt / grid.dx
    if np.max(np.abs(nu)) > cfl * (1.0 + 1e-12):
        raise CflError(f"v_max dt / dx = {np.max(np.abs(nu)):.4g} exceeds {cfl}")
    if reservoirs is None:
        reservoirs = inflow_reservoirs(grid, vgrid)
    fg = _ghosts(f, grid, vgrid, reservoirs)
    slope = np.zeros_like(fg)
    slope[1:-1] = _minmod(fg[1:-1] - fg[:-2], fg[2:] - fg[1:-1])
    # interfaces between padded cells k and k+1, k = g-1 .. n+g-1
    k = np.arange(N_GHOST - 1, f.shape[0] + N_GHOST)
    pos = v > 0
    up_left = fg[k] + 0.5 * (1.0 - nu) * slope[k]
    up_right = fg[k + 1] - 0.5 * (1.0 + nu) * slope[k + 1]
    flux = v * np.where(pos, up_left, up_right)
    return f - dt / grid.dx * (flux[1:] - flux[:-1])


def inflow_reservoirs(grid: Grid1D, vgrid: VelocityGrid) -> dict:
    out = {}
    for side, bnd in (("left", grid.left), ("right", grid.right)):
        if bnd.kind == "inflow":
            out[side] = discrete_maxwellian(np.asarray(bnd.state, dtype=float)[:, None], vgrid)
    return out


def dvm_relax(f, dt: float, eps: float, vgrid: VelocityGrid):
    """Exact BGK relaxation ``f <- lam f + (1 - lam) M_f`` with ``lam = exp(-dt/eps)``."""
    lam = float(np.exp(-dt / eps))
    if lam == 1.0:
        return f
    return lam * f + (1.0 - lam) * discrete_maxwellian(dvm_moments(f, vgrid), vgrid)


def dvm_step(f, dt: float, eps: float, grid: Grid1D, vgrid: VelocityGrid, reservoirs=None, cfl: float = 1.0):
    """Transport then relax; raises :class:`CflError` when ``v_max dt > cfl dx``."""
    return dvm_relax(dvm_transport(f, dt, grid, vgrid, reservoirs, cfl), dt, eps, vgrid)


def default_velocity_grid(U0, n_v: int = 64) -> VelocityGrid:
    """Nodes spanning ``max(|u| + 6 sqrt(T))`` of the initial field."""
    _, u, T, _ = primitives_from_conserved(U0)
    return VelocityGrid(n_v, float(np.max(np.abs(u) + 6.0 * np.sqrt(T))))


def solve_dvm(U0, grid: Grid1D, eps: float, t_final: float, n_v: int = 64, cfl: float = 0.9,
              vgrid: VelocityGrid | None = None, callback=None, max_steps: int | None = None) -> KineticField:
    """Integrate from the local Maxwellian of ``U0`` to ``t_final`` or for ``max_steps`` steps."""
    vgrid = vgrid or default_velocity_grid(U0, n_v)
    f = discrete_maxwellian(U0, vgrid)
    reservoirs = inflow_reservoirs(grid, vgrid)
    dt_max = cfl * grid.dx / vgrid.v_max
    t, k = 0.0, 0
    while t < t_final and (max_steps is None or k < max_steps):
        dt = min(dt_max, t_final - t)
        f = dvm_step(f, dt, eps, grid, vgrid, reservoirs)
        t += dt
        k += 1
        if callback is not None:
            callback(t, f)
    return KineticField(f, vgrid)
