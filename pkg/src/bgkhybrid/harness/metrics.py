"""Error norms against reference solutions."""
from __future__ import annotations

import numpy as np

from ..core import primitives_from_conserved

FIELDS = ("rho", "u", "T")


def restrict(U: np.ndarray, n_cells: int) -> np.ndarray:
    """Average a conserved field onto ``n_cells`` coarse cells (integer ratio only)."""
    U = np.asarray(U, dtype=np.float64)
    m = U.shape[1]
    if m == n_cells:
        return U
    if m % n_cells:
        raise ValueError(f"cannot coarsen {m} cells onto {n_cells}")
    return U.reshape(3, n_cells, m // n_cells).mean(axis=2)


def primitive_fields(U: np.ndarray) -> dict:
    rho, u, T, _ = primitives_from_conserved(U)
    return {"rho": rho, "u": u, "T": T}


def l1_from_fields(sol: dict, ref: dict, dx: float) -> dict:
    return {k: float(np.sum(np.abs(np.asarray(sol[k]) - np.asarray(ref[k]))) * dx) for k in FIELDS}


def l1_error(U: np.ndarray, U_ref: np.ndarray, dx: float) -> dict:
    """``sum |q - q_ref| dx`` for density, velocity and temperature.

    A finer reference is averaged onto the solution grid in conserved
    variables before the primitives are compared.
    """
    U = np.asarray(U, dtype=np.float64)
    ref = restrict(U_ref, U.shape[1])
    return l1_from_fields(primitive_fields(U), primitive_fields(ref), dx)
