"""CSV and JSON output with a fixed, reproducible format."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

PROFILE_COLUMNS = ("x", "rho", "u", "T", "E", "beta")
TIMESERIES_COLUMNS = ("t", "n_particles", "mass", "momentum", "energy")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) if not isinstance(v, str) else v for v in row) for row in rows]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


def read_csv(path) -> dict:
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    cols = list(zip(*(line.split(",") for line in text[1:])))
    out = {}
    for name, col in zip(header, cols):
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = list(col)
    return out


def write_profile(path, x, U, beta) -> None:
    rho = U[0]
    u = U[1] / rho
    T = 2.0 * U[2] / rho - u * u
    write_csv(path, PROFILE_COLUMNS, zip(x, rho, u, T, U[2], beta))


def read_profile_conserved(path):
    """``(x, U)`` from a profile CSV."""
    d = read_csv(path)
    rho, u, E = d["rho"], d["u"], d["E"]
    return d["x"], np.stack([rho, rho * u, E])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")
