"""Finite-volume solvers for the 1-D Euler system closed by ``p = rho T``.

For the one-dimensional BGK closure ``E = rho T / 2 + rho u^2 / 2`` the
adiabatic index is ``gamma = (d + 2) / d = 3``, so the sound speed is
``sqrt(3 T)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import Grid1D

GAMMA = 3.0
N_GHOST = 2


class SolverFailure(RuntimeError):
    """A fluid update produced a non-physical state."""

    def __init__(self, message: str, cell: int | None = None):
        super().__init__(message if cell is None else f"{message} (cell {cell})")
        self.cell = cell


class FluidSolverInterface(Protocol):
    def step(self, U: np.ndarray, dt: float, grid: Grid1D) -> np.ndarray: ...

    def max_dt(self, U: np.ndarray, grid: Grid1D) -> float: ...


@dataclass(frozen=True)
class RelaxedSchemeConfig:
    cfl: float = 0.9
    limiter: str = "minmod"
    safety: float = 1.2

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if self.limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {self.limiter!r}")
        if self.safety < 1.0:
            raise ValueError("relaxation speed safety factor must be >= 1")


def _check_state(U, what="state"):
    rho = U[0]
    bad = ~(rho > 0)
    if np.any(bad):
        raise SolverFailure(f"non-positive density in {what}", int(np.flatnonzero(bad)[0]))
    u = U[1] / rho
    p = 2.0 * U[2] - rho * u * u  # rho T
    bad = ~(p > 0)
    if np.any(bad):
        raise SolverFailure(f"non-positive pressure in {what}", int(np.flatnonzero(bad)[0]))
    return rho, u, p / rho


def euler_flux(U: np.ndarray) -> np.ndarray:
    rho, mom, energy = U
    u = mom / rho
    p = 2.0 * energy - mom * u
    return np.stack([mom, mom * u + p, (energy + p) * u])


def wave_speed(U: np.ndarray) -> np.ndarray:
    """Largest characteristic speed ``|u| + sqrt(3 T)`` per cell."""
    _, u, T = _check_state(U)
    return np.abs(u) + np.sqrt(GAMMA * T)


def euler_max_dt(U: np.ndarray, grid: Grid1D, cfl: float = 0.9) -> float:
    """``cfl * dx / max(|u| + sqrt(3 T))``."""
    return cfl * grid.dx / float(np.max(wave_speed(U)))


def boundary_fill(U: np.ndarray, grid: Grid1D, n_ghost: int = N_GHOST) -> np.ndarray:
    """Pad the field with ghost cells on both sides.

    periodic copies the opposite end, specular mirrors the interior with the
    momentum negated, inflow holds the reservoir state and free_flow copies
    the edge cell.
    """
    U = np.asarray(U, dtype=np.float64)
    g = n_ghost
    out = np.empty((3, U.shape[1] + 2 * g))
    out[:, g:-g] = U
    if grid.periodic:
        out[:, :g] = U[:, -g:]
        out[:, -g:] = U[:, :g]
        return out
    for side, bnd in (("left", grid.left), ("right", grid.right)):
        # interior is ordered outward from the boundary, matching the ghost layout
        if side == "left":
            interior, ghost = U[:, :g][:, ::-1], slice(0, g)
        else:
            interior, ghost = U[:, -g:][:, ::-1], slice(out.shape[1] - g, None)
        if bnd.kind == "specular":
            fill = interior * np.array([1.0, -1.0, 1.0])[:, None]
        elif bnd.kind == "inflow":
            fill = np.repeat(np.asarray(bnd.state, dtype=float)[:, None], g, axis=1)
        else:
            edge = U[:, :1] if side == "left" else U[:, -1:]
            fill = np.repeat(edge, g, axis=1)
        out[:, ghost] = fill
    return out


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _mc(a, b):
    return np.where(
        a * b > 0,
        np.sign(a) * np.minimum(np.minimum(2 * np.abs(a), 2 * np.abs(b)), 0.5 * np.abs(a + b)),
        0.0,
    )


LIMITERS = {"minmod": _minmod, "mc": _mc}


def _relaxed_fluxes(Ug, a, limiter):
    """Interface fluxes of the relaxation system from a padded field.

    The characteristic variables ``w+- = a U +- F`` travel at ``+-a``; each is
    reconstructed upwind with limited slopes and the flux is ``(w+_L - w-_R)/2``.
    Returns the ``n + 1`` fluxes of the interior interfaces.
    """
    F = euler_flux(Ug)
    wp = a * Ug + F
    wm = a * Ug - F
    if limiter is None:
        return 0.5 * (wp[:, 1:-2] - wm[:, 2:-1])
    dp, dm = np.diff(wp, axis=1), np.diff(wm, axis=1)
    sp = limiter(dp[:, :-1], dp[:, 1:])  # slopes of padded cells 1..n+2g-2
    sm = limiter(dm[:, :-1], dm[:, 1:])
    # interfaces between padded cells k and k+1 for k = g-1 .. n+g-1
    left = wp[:, 1:-2] + 0.5 * sp[:, :-1]
    right = wm[:, 2:-1] - 0.5 * sm[:, 1:]
    return 0.5 * (left - right)


class _RelaxedSolverBase:
    """Jin-Xin relaxed scheme with a global relaxation speed frozen per step."""

    limiter = None
    order = 1

    def __init__(self, config: RelaxedSchemeConfig | None = None):
        self.config = config or RelaxedSchemeConfig()

    def relaxation_speed(self, U, grid):
        Ug = boundary_fill(U, grid)
        return self.config.safety * float(np.max(wave_speed(Ug)))

    def max_dt(self, U: np.ndarray, grid: Grid1D) -> float:
        # the Courant number is measured against the relaxation speed
        return self.config.cfl * grid.dx / self.relaxation_speed(U, grid)

    def _rhs(self, U, grid, a):
        Ug = boundary_fill(U, grid)
        _check_state(Ug, "reconstruction")
        flux = _relaxed_fluxes(Ug, a, self.limiter)
        return -(flux[:, 1:] - flux[:, :-1]) / grid.dx

    def step(self, U: np.ndarray, dt: float, grid: Grid1D) -> np.ndarray:
        U = np.asarray(U, dtype=np.float64)
        if dt < 0:
            raise ValueError("dt must be non-negative")
        a = self.relaxation_speed(U, grid)
        if a * dt > grid.dx * (1.0 + 1e-12):
            raise SolverFailure(f"time step {dt:g} exceeds the relaxation CFL limit {grid.dx / a:g}")
        if self.order == 1:
            out = U + dt * self._rhs(U, grid, a)
        else:
            U1 = U + dt * self._rhs(U, grid, a)
            _check_state(U1, "first stage")
            out = 0.5 * (U + U1 + dt * self._rhs(U1, grid, a))
        _check_state(out, "update")
        return out


class MusclRelaxedSolver(_RelaxedSolverBase):
    """Second order: limited slopes on the relaxation variables and Heun time stepping."""

    order = 2

    def __init__(self, config: RelaxedSchemeConfig | None = None):
        super().__init__(config)
        self.limiter = LIMITERS[self.config.limiter]


class LaxFriedrichsSolver(_RelaxedSolverBase):
    """First-order local flux with the global relaxation speed (Rusanov-type)."""

    order = 1


FLUID_SOLVERS = {"muscl_relaxed": MusclRelaxedSolver, "lax_friedrichs": LaxFriedrichsSolver}


def get_fluid_solver(solver_id: str = "muscl_relaxed", **kwargs) -> FluidSolverInterface:
    try:
        cls = FLUID_SOLVERS[solver_id]
    except KeyError:
        raise ValueError(f"unknown fluid solver {solver_id!r}; choose from {sorted(FLUID_SOLVERS)}") from None
    return cls(RelaxedSchemeConfig(**kwargs) if kwargs else None)


def euler_step(U: np.ndarray, dt: float, grid: Grid1D, config: RelaxedSchemeConfig | None = None) -> np.ndarray:
    """One second-order relaxed MUSCL update of the conserved field."""
    return MusclRelaxedSolver(config).step(U, dt, grid)


def solve_euler(U: np.ndarray, grid: Grid1D, t_final: float, solver: FluidSolverInterface | None = None):
    """Integrate to ``t_final`` at the solver's largest stable step."""
    solver = solver or MusclRelaxedSolver()
    t = 0.0
    U = np.asarray(U, dtype=np.float64)
    while t < t_final:
        dt = min(solver.max_dt(U, grid), t_final - t)
        U = solver.step(U, dt, grid)
        t += dt
    return U
