"""Benchmark scenarios: smooth periodic flow, unsteady shock and Lax tube."""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from ..core import Boundary, Grid1D, primitives_from_conserved

SHOCK_STATE = (1.0, -1.0, 2.5)
LAX_LEFT = (0.445, 0.598, 3.5)
LAX_RIGHT = (0.5, 0.0, 0.48)


def accuracy_profile(x, L: float = 1.0):
    """Density, velocity and energy perturbed by one sine period (energy, not temperature)."""
    s = np.sin(2.0 * np.pi * np.asarray(x, dtype=float) / L)
    rho = 1.0 + 0.3 * s
    u = 1.5 + 0.1 * s
    E = 2.5 + 1.0 * s
    return np.stack([rho, rho * u, E])


def uniform_profile(x, state):
    x = np.asarray(x, dtype=float)
    return np.repeat(np.asarray(state, dtype=float)[:, None], x.size, axis=1)


def riemann_profile(x, left, right, x0: float = 0.5):
    x = np.asarray(x, dtype=float)
    return np.where(x < x0, np.asarray(left, dtype=float)[:, None], np.asarray(right, dtype=float)[:, None])


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: Grid1D
    profile: Callable
    t_final: float
    ppc: int

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    def with_cells(self, n_cells: int) -> "Scenario":
        return Scenario(self.name, self.grid.with_cells(n_cells), self.profile, self.t_final, self.ppc)


SCENARIOS = ("accuracy", "shock", "lax")


def build_scenario(name: str, cells: int | None = None) -> Scenario:
    if name == "accuracy":
        sc = Scenario(name, Grid1D(0.0, 1.0, 200), accuracy_profile, 0.05, 200)
    elif name == "shock":
        grid = Grid1D(0.0, 1.0, 200, Boundary("specular"), Boundary("inflow", SHOCK_STATE))
        sc = Scenario(name, grid, partial(uniform_profile, state=SHOCK_STATE), 0.065, 500)
    elif name == "lax":
        grid = Grid1D(0.0, 1.0, 200, Boundary("free_flow"), Boundary("free_flow"))
        sc = Scenario(name, grid, partial(riemann_profile, left=LAX_LEFT, right=LAX_RIGHT), 0.05, 500)
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    # every initial state must be a valid gas
    primitives_from_conserved(sc.profile(sc.grid.centers))
    return sc if cells is None else sc.with_cells(cells)
