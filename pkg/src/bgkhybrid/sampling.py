"""Stochastic primitives: seeded streams, stochastic rounding, Maxwellian
sampling, moment matching, Maxwellian ratio minimisation and the
acceptance-rejection sampler for residual distributions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import MaxwellianParams, eval_maxwellian

MIN_ACCEPTANCE = 1e-6
CLAMP_TOL = 1e-9
# sample variance below this fraction of the second moment counts as degenerate
MIN_REL_VARIANCE = 1e-10


class MomentMatchError(ValueError):
    """Moment matching is impossible for the given samples or targets."""


class AcceptanceError(ValueError):
    """Expected acceptance of the residual sampler is too small."""


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by a seed and a tuple id.

    Identical ``(seed, stream_id)`` pairs always produce identical draws.
    Solvers key their streams by ``(step, phase)`` so that every step is
    independent of how many draws earlier steps consumed.
    """

    seed: int
    stream_id: tuple = ()

    def generator(self) -> np.random.Generator:
        key = tuple(int(k) for k in self.stream_id)
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *key) -> "RngStream":
        return RngStream(self.seed, tuple(self.stream_id) + tuple(key))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def iround(x, rng):
    """Stochastic rounding with expectation ``x``.

    Returns ``floor(x)`` with probability ``floor(x) + 1 - x`` and
    ``floor(x) + 1`` otherwise. Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("iround needs finite non-negative arguments")
    gen = as_generator(rng)
    base = np.floor(x)
    frac = x - base
    out = base + (gen.random(x.shape) < frac)
    out = out.astype(np.int64)
    return int(out) if out.ndim == 0 else out


def standard_normal(rng, n: int) -> np.ndarray:
    """``n`` standard normal draws by the Box-Muller transform."""
    gen = as_generator(rng)
    m = (n + 1) // 2
    u1 = 1.0 - gen.random(m)  # (0, 1]
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]


def sample_maxwellian(M: MaxwellianParams, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. velocities from the Maxwellian ``M`` (a Normal(u, T))."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if n == 0:
        return np.empty(0)
    return M.u + np.sqrt(M.T) * standard_normal(rng, n)


def moment_match(velocities, m1: float, m2: float) -> np.ndarray:
    """Affinely map samples so their mean is ``m1`` and second moment ``m2``.

    Uses ``v* = (v - mu1)/c + m1`` with ``c = sqrt((mu2 - mu1^2)/(m2 - m1^2))``
    so both moment conditions hold exactly.
    """
    v = np.asarray(velocities, dtype=np.float64)
    if v.size < 2:
        raise MomentMatchError("need at least two samples")
    target_var = m2 - m1 * m1
    if not target_var > 0:
        raise MomentMatchError("target variance must be positive")
    mu1 = v.mean()
    dev = v - mu1
    var = np.mean(dev * dev)
    if not var > MIN_REL_VARIANCE * np.mean(v * v):
        raise MomentMatchError("samples have zero variance")
    return dev * np.sqrt(target_var / var) + m1


def group_moment_match(v, group, n_groups, m1, m2, active=None):
    """Moment-match every group of samples independently.

    ``group`` gives the group index of each sample; ``m1``/``m2`` are per-group
    targets. Groups that cannot be matched (fewer than two samples, zero
    sample variance or non-positive target variance) are left untouched.

    Returns ``(new_v, matched)`` with ``matched`` a boolean per group.
    """
    v = np.asarray(v, dtype=np.float64)
    count = np.bincount(group, minlength=n_groups).astype(np.float64)
    safe = np.maximum(count, 1.0)
    mu1 = np.bincount(group, weights=v, minlength=n_groups) / safe
    dev = v - mu1[group]
    var = np.bincount(group, weights=dev * dev, minlength=n_groups) / safe
    second = np.bincount(group, weights=v * v, minlength=n_groups) / safe
    target_var = m2 - m1 * m1
    ok = (count >= 2) & (var > MIN_REL_VARIANCE * second) & (target_var > 0) & np.isfinite(target_var)
    if active is not None:
        ok &= active
    scale = np.ones(n_groups)
    scale[ok] = np.sqrt(target_var[ok] / var[ok])
    out = v.copy()
    sel = ok[group]
    g = group[sel]
    out[sel] = dev[sel] * scale[g] + m1[g]
    return out, ok


@dataclass(frozen=True)
class RatioMinResult:
    min_value: float
    argmin_v: float


def log_ratio_min(rho1, u1, T1, rho2, u2, T2, lo, hi):
    """Exact minimum of ``log(M1(v)/M2(v))`` over ``[lo, hi]`` (vectorised).

    The exponent of a ratio of two Gaussians is quadratic in ``v``; its
    minimum sits at the vertex when the quadratic is convex and the vertex is
    inside the interval, and at an endpoint otherwise. Returns
    ``(log_min, argmin)``; a zero numerator density gives ``-inf``.
    """
    rho1, u1, T1, rho2, u2, T2, lo, hi = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (rho1, u1, T1, rho2, u2, T2, lo, hi))
    )

    def q(v):
        return -((v - u1) ** 2) / (2.0 * T1) + ((v - u2) ** 2) / (2.0 * T2)

    a = 0.5 * (1.0 / T2 - 1.0 / T1)
    b = u1 / T1 - u2 / T2
    with np.errstate(divide="ignore", invalid="ignore"):
        vert = np.where(a > 0, -b / (2.0 * a), lo)
    inside = (a > 0) & (vert >= lo) & (vert <= hi)
    q_lo, q_hi = q(lo), q(hi)
    q_best = np.where(q_lo <= q_hi, q_lo, q_hi)
    v_best = np.where(q_lo <= q_hi, lo, hi)
    q_vert = q(np.where(inside, vert, lo))
    use_vert = inside & (q_vert < q_best)
    q_best = np.where(use_vert, q_vert, q_best)
    v_best = np.where(use_vert, vert, v_best)
    with np.errstate(divide="ignore"):
        const = np.log(rho1) - np.log(rho2) + 0.5 * (np.log(T2) - np.log(T1))
    return const + q_best, v_best


def min_ratio_maxwellians(numer, denom: MaxwellianParams, interval) -> RatioMinResult:
    """Minimum over ``interval`` of ``numer(v) / denom(v)``.

    ``numer`` is a single :class:`MaxwellianParams` or a sequence of
    ``(weight, MaxwellianParams)`` pairs with non-negative weights. For a
    single Maxwellian the minimum is exact. For a weighted sum the result is
    the lower bound ``(sum of weights) * min_k min_v M_k/denom``, which never
    overestimates the true minimum.
    """
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must satisfy b > a")
    terms: Sequence = [(1.0, numer)] if isinstance(numer, MaxwellianParams) else list(numer)
    if any(w < 0 for w, _ in terms):
        raise ValueError("numerator weights must be non-negative")
    total_w = sum(w for w, _ in terms)
    best, arg = np.inf, a
    for _, M in terms:
        lm, v = log_ratio_min(M.rho, M.u, M.T, denom.rho, denom.u, denom.T, a, b)
        if lm < best:
            best, arg = float(lm), float(v)
    if total_w == 0:
        return RatioMinResult(0.0, arg)
    return RatioMinResult(total_w * float(np.exp(best)), arg)


def acceptance_sample(keep, counts, targets, rng, raw=None):
    """Acceptance-rejection with replacement from per-group source pools.

    ``keep`` holds the (already clamped) keep probability of every source
    particle, sorted by group, with ``counts[g]`` particles in group ``g``.
    Each trial picks a source particle of the group uniformly, with
    replacement, and keeps it with its probability, until ``targets[g]``
    particles are accepted.

    Returns ``(indices, groups, ok, n_clamped)``: the accepted source indices,
    their groups, a per-group mask of groups that could be served (non-empty
    source with expected acceptance above ``MIN_ACCEPTANCE``), and how many
    trials hit a clamped probability when ``raw`` is given.
    """
    gen = as_generator(rng)
    keep = np.asarray(keep, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    n_groups = counts.size
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    group_of = np.repeat(np.arange(n_groups), counts)
    exp_acc = np.bincount(group_of, weights=keep, minlength=n_groups) / np.maximum(counts, 1)
    ok = (counts > 0) & (exp_acc > MIN_ACCEPTANCE)
    remaining = np.where(ok, targets, 0)
    clamped = None
    if raw is not None:
        raw = np.asarray(raw, dtype=np.float64)
        clamped = (raw < -CLAMP_TOL) | (raw > 1.0 + CLAMP_TOL)
    n_clamped = 0
    out_idx, out_grp = [], []
    while np.any(remaining > 0):
        g_need = np.flatnonzero(remaining > 0)
        trials = np.ceil(remaining[g_need] / exp_acc[g_need] * 1.2).astype(np.int64) + 1
        trials = np.minimum(trials, 1_000_000)
        g_trial = np.repeat(g_need, trials)
        picks = starts[g_trial] + np.floor(gen.random(g_trial.size) * counts[g_trial]).astype(np.int64)
        picks = np.minimum(picks, starts[g_trial] + counts[g_trial] - 1)
        acc = gen.random(g_trial.size) < keep[picks]
        if clamped is not None:
            n_clamped += int(np.count_nonzero(clamped[picks]))
        a_idx, a_grp = picks[acc], g_trial[acc]
        # trials are group-contiguous, so the offset from the group's first hit is its rank
        rank = np.arange(a_grp.size) - np.searchsorted(a_grp, a_grp, side="left")
        take = rank < remaining[a_grp]
        out_idx.append(a_idx[take])
        out_grp.append(a_grp[take])
        remaining -= np.bincount(a_grp[take], minlength=n_groups)
    if out_idx:
        idx, grp = np.concatenate(out_idx), np.concatenate(out_grp)
    else:
        idx, grp = np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return idx, grp, ok, n_clamped


def residual_keep_probability(v, source_density, beta_c, target_density):
    """Raw and clamped keep probabilities ``1 - beta_c * M_H(v) / M_hat(v)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 1.0 - beta_c * target_density / source_density
    raw = np.where(np.isfinite(raw), raw, 0.0)
    return raw, np.clip(raw, 0.0, 1.0)


def accept_reject_residual(
    source,
    source_density: Callable[[np.ndarray], np.ndarray],
    n: int,
    beta_c: float,
    MH: MaxwellianParams,
    rng,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Sample ``n`` velocities from ``(M_hat - beta_c M_H) / (1 - beta_c)``.

    ``source`` holds samples of ``M_hat``, whose density is given by
    ``source_density``. Each trial picks a source sample uniformly with
    replacement and keeps it with probability ``1 - beta_c M_H(v)/M_hat(v)``.
    Probabilities outside ``[0, 1]`` are clamped and counted under
    ``diagnostics["clamp_count"]``.
    """
    if not 0.0 <= beta_c <= 1.0:
        raise ValueError("beta_c must lie in [0, 1]")
    src = np.asarray(source, dtype=np.float64)
    if src.size == 0:
        raise ValueError("source sample set is empty")
    dens = np.asarray(source_density(src), dtype=np.float64)
    if np.any(dens <= 0):
        raise ValueError("source density must be positive at every sample")
    raw, keep = residual_keep_probability(src, dens, beta_c, eval_maxwellian(MH, src))
    idx, _, ok, n_clamped = acceptance_sample(keep, np.array([src.size]), np.array([n]), rng, raw=raw)
    if n > 0 and not ok[0]:
        raise AcceptanceError("expected acceptance below 1e-6; beta_c is too large for this source")
    if diagnostics is not None:
        diagnostics["clamp_count"] = diagnostics.get("clamp_count", 0) + n_clamped
    return src[idx]
