"""Shared domain types, grids and Maxwellian/moment algebra.

Conserved fields are stored as ``(3, n)`` float64 arrays with rows
``(rho, rho*u, E)``; the scalar :class:`ConservedMoments` type wraps a single
cell (or broadcasts over arrays) for the public API.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

SQRT_2PI = np.sqrt(2.0 * np.pi)

BOUNDARY_KINDS = ("periodic", "specular", "inflow", "free_flow")


class InvalidStateError(ValueError):
    """Raised when a moment state has non-positive density or temperature."""

    def __init__(self, message: str, cell: Optional[int] = None):
        super().__init__(message if cell is None else f"{message} (cell {cell})")
        self.cell = cell


@dataclass(frozen=True)
class ConservedMoments:
    rho: float
    mom: float
    energy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.mom, self.energy], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ConservedMoments":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class MaxwellianParams:
    rho: float
    u: float
    T: float

    def __post_init__(self):
        if not (self.rho > 0 and self.T > 0):
            raise InvalidStateError(f"Maxwellian needs rho > 0 and T > 0, got rho={self.rho}, T={self.T}")

    @classmethod
    def from_conserved(cls, U: ConservedMoments, d: int = 1) -> "MaxwellianParams":
        rho, u, T, _ = primitives_from_conserved(U, d)
        return cls(rho, u, T)


@dataclass(frozen=True)
class KnudsenConfig:
    epsilon: float
    C: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("Knudsen number must be positive")

    @property
    def tau(self) -> float:
        return self.epsilon / self.C


@dataclass(frozen=True)
class Boundary:
    """One side of the domain. ``state`` is the reservoir (rho, rho*u, E) for inflow."""

    kind: str = "periodic"
    state: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "inflow" and self.state is None:
            raise ValueError("inflow boundary needs a reservoir state")


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int
    left: Boundary = field(default_factory=Boundary)
    right: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("need at least two cells")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if (self.left.kind == "periodic") != (self.right.kind == "periodic"):
            raise ValueError("periodic boundaries must be set on both sides")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    @property
    def periodic(self) -> bool:
        return self.left.kind == "periodic"

    def cell_of(self, x) -> np.ndarray:
        idx = np.floor((np.asarray(x) - self.x_min) / self.dx).astype(np.int64)
        return np.clip(idx, 0, self.n_cells - 1)

    def with_cells(self, n_cells: int) -> "Grid1D":
        return replace(self, n_cells=n_cells)

    def scaled_inflow(self, left_factor: float = 1.0, right_factor: float = 1.0) -> "Grid1D":
        """Copy of the grid with inflow reservoir states multiplied by a factor.

        Used to hand only the equilibrium fraction of a reservoir to a fluid solver.
        """
        left, right = self.left, self.right
        if left.kind == "inflow":
            left = Boundary("inflow", tuple(left_factor * np.asarray(left.state, dtype=float)))
        if right.kind == "inflow":
            right = Boundary("inflow", tuple(right_factor * np.asarray(right.state, dtype=float)))
        return replace(self, left=left, right=right)


def primitives_from_conserved(U, d: int = 1):
    """Return ``(rho, u, T, p)`` from conserved moments.

    ``U`` may be a :class:`ConservedMoments` or an array whose first axis is
    ``(rho, rho*u, E)``; arrays are handled elementwise.
    """
    if isinstance(U, ConservedMoments):
        rho, mom, energy = U.rho, U.mom, U.energy
    else:
        U = np.asarray(U, dtype=np.float64)
        rho, mom, energy = U[0], U[1], U[2]
    rho_arr = np.asarray(rho, dtype=np.float64)
    bad = ~(rho_arr > 0)
    if np.any(bad):
        cell = int(np.flatnonzero(np.atleast_1d(bad))[0]) if rho_arr.ndim else None
        raise InvalidStateError("non-positive density", cell)
    u = mom / rho
    T = (2.0 * energy / rho - u * u) / d
    T_arr = np.asarray(T)
    bad = ~(T_arr > 0)
    if np.any(bad):
        cell = int(np.flatnonzero(np.atleast_1d(bad))[0]) if T_arr.ndim else None
        raise InvalidStateError("non-positive temperature", cell)
    return rho, u, T, rho * T


def conserved_from_primitives(rho, u, T, d: int = 1):
    """Inverse of :func:`primitives_from_conserved`; returns a ``(3, ...)`` array."""
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    return np.stack([rho, rho * u, 0.5 * d * rho * T + 0.5 * rho * u * u])


def eval_maxwellian(M, v):
    """Evaluate the 1-D local Maxwellian ``rho (2 pi T)^(-1/2) exp(-(u-v)^2 / 2T)``."""
    if isinstance(M, MaxwellianParams):
        rho, u, T = M.rho, M.u, M.T
    else:
        rho, u, T = M
    v = np.asarray(v, dtype=np.float64)
    return rho / np.sqrt(2.0 * np.pi * T) * np.exp(-((u - v) ** 2) / (2.0 * T))


def moments_of_sample_set(velocities, mp: float, dx: float) -> ConservedMoments:
    """Cell moments of a particle set with uniform mass ``mp`` in a cell of width ``dx``.

    An empty set gives zero moments, which callers treat as a vacuum cell.
    """
    v = np.asarray(velocities, dtype=np.float64)
    w = mp / dx
    # np.sum uses pairwise summation
    return ConservedMoments(v.size * w, w * float(np.sum(v)), w * 0.5 * float(np.sum(v * v)))


def maxwellian_field(U: np.ndarray) -> tuple:
    """``(rho, u, T)`` arrays parameterising the Maxwellians of a conserved field."""
    rho, u, T, _ = primitives_from_conserved(U)
    return rho, u, T


def cell_averages(profile, grid: Grid1D, order: int = 6) -> np.ndarray:
    """Gauss-Legendre cell averages of a pointwise conserved profile.

    ``profile(x)`` must return a ``(3, len(x))`` array of ``(rho, rho*u, E)``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    left = grid.edges[:-1]
    acc = np.zeros((3, grid.n_cells))
    for xi, wi in zip(nodes, weights):
        x = left + 0.5 * (xi + 1.0) * grid.dx
        acc += 0.5 * wi * np.asarray(profile(x), dtype=np.float64)
    return acc
