import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgkhybrid.core import MaxwellianParams, eval_maxwellian
from bgkhybrid.sampling import (
    AcceptanceError,
    MomentMatchError,
    RngStream,
    accept_reject_residual,
    group_moment_match,
    iround,
    log_ratio_min,
    min_ratio_maxwellians,
    moment_match,
    sample_maxwellian,
    standard_normal,
)


def test_rng_stream_determinism_and_independence():
    a = RngStream(7, (3, 1)).generator().random(5)
    b = RngStream(7, (3, 1)).generator().random(5)
    c = RngStream(7, (3, 2)).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RngStream(7).child(3, 1) == RngStream(7, (3, 1))


def test_iround_integers_and_zero():
    rng = np.random.default_rng(0)
    assert all(iround(3.0, rng) == 3 for _ in range(50))
    assert all(iround(0.0, rng) == 0 for _ in range(50))


def test_iround_mean():
    draws = iround(np.full(10**6, 2.3), np.random.default_rng(1))
    assert set(np.unique(draws)) == {2, 3}
    assert abs(draws.mean() - 2.3) < 3 * np.sqrt(0.21 / 10**6)


@pytest.mark.parametrize("x", [-0.1, np.inf, np.nan])
def test_iround_rejects(x):
    with pytest.raises(ValueError):
        iround(x, 0)


def test_box_muller_moments():
    z = standard_normal(np.random.default_rng(2), 10**6 + 1)
    assert z.size == 10**6 + 1
    assert abs(z.mean()) < 5e-3
    assert abs(np.mean(z * z) - 1) < 1e-2


def test_sample_maxwellian():
    M = MaxwellianParams(1.0, 0.0, 1.0)
    assert sample_maxwellian(M, 0, 0).size == 0
    v = sample_maxwellian(M, 10**6, RngStream(5).generator())
    assert abs(v.mean()) < 5e-3
    assert abs(np.mean(v * v) - 1) < 1e-2
    assert np.array_equal(sample_maxwellian(M, 10, RngStream(1, (2,))), sample_maxwellian(M, 10, RngStream(1, (2,))))


def test_moment_match_examples():
    assert np.allclose(moment_match([-1.0, 1.0], 0.0, 1.0), [-1.0, 1.0])
    assert np.allclose(moment_match([-1.0, 1.0], 2.0, 5.0), [1.0, 3.0])


def test_moment_match_errors():
    with pytest.raises(MomentMatchError):
        moment_match([1.0], 0.0, 1.0)
    with pytest.raises(MomentMatchError):
        moment_match([2.0, 2.0, 2.0], 0.0, 1.0)
    with pytest.raises(MomentMatchError):
        moment_match([1.0, 2.0], 1.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-20, 20), min_size=2, max_size=50),
    st.floats(-5, 5),
    st.floats(0.01, 10),
)
def test_moment_match_exact(vals, m1, var):
    v = np.array(vals)
    if np.var(v) <= 1e-10 * np.mean(v * v):
        return
    m2 = m1 * m1 + var
    out = moment_match(v, m1, m2)
    assert np.mean(out) == pytest.approx(m1, rel=1e-12, abs=1e-12 * np.sqrt(m2))
    assert np.mean(out * out) == pytest.approx(m2, rel=1e-12)


def test_group_moment_match_skips_degenerate_groups():
    v = np.array([1.0, 2.0, 5.0, 7.0, 7.0])
    g = np.array([0, 0, 1, 2, 2])
    out, ok = group_moment_match(v, g, 3, np.array([0.0, 0.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    assert ok.tolist() == [True, False, False]
    assert np.allclose(out[:2], [-1, 1])
    assert np.array_equal(out[2:], v[2:])


def test_min_ratio_examples():
    M = MaxwellianParams(1, 0, 1)
    r = min_ratio_maxwellians(M, M, (-5, 5))
    assert r.min_value == pytest.approx(1.0, rel=1e-15)
    assert min_ratio_maxwellians(MaxwellianParams(0.5, 0, 1), M, (-3, 7)).min_value == pytest.approx(0.5)
    with pytest.raises(ValueError):
        min_ratio_maxwellians(M, M, (1, 1))


def grid_min(numer, denom, a, b, n=100001):
    v = np.linspace(a, b, n)
    total = sum(w * eval_maxwellian(M, v) for w, M in numer)
    ratio = total / eval_maxwellian(denom, v)
    return ratio.min()


def test_min_ratio_matches_grid_search():
    numer = MaxwellianParams(1, 0, 1)
    denom = MaxwellianParams(1, 0, 2)
    r = min_ratio_maxwellians(numer, denom, (0, 4))
    assert r.min_value == pytest.approx(grid_min([(1.0, numer)], denom, 0, 4), rel=1e-8)
    assert 0 <= r.argmin_v <= 4


def test_min_ratio_vertex_case():
    # denominator narrower than numerator: convex exponent with an interior minimum
    numer = MaxwellianParams(1, 0.5, 2.0)
    denom = MaxwellianParams(1, 0, 1.0)
    r = min_ratio_maxwellians(numer, denom, (-3, 3))
    assert -3 < r.argmin_v < 3
    assert r.min_value == pytest.approx(grid_min([(1.0, numer)], denom, -3, 3), rel=1e-8)


def test_log_ratio_min_is_vectorised():
    lm, arg = log_ratio_min([1, 2], [0, 1], [1, 1], [1, 1], [0, 0], [2, 2], 0.0, [1.0, 3.0])
    assert lm.shape == (2,) and arg.shape == (2,)


params = st.tuples(st.floats(0.1, 5), st.floats(-2, 2), st.floats(0.3, 4))


@settings(max_examples=60, deadline=None)
@given(params, params, params, st.floats(0.0, 1.0), st.floats(-4, 3), st.floats(0.2, 3))
def test_two_term_bound_never_overestimates(p1, p2, pd, w, a, width):
    M1, M2, D = MaxwellianParams(*p1), MaxwellianParams(*p2), MaxwellianParams(*pd)
    numer = [(w, M1), (1 - w, M2)]
    r = min_ratio_maxwellians(numer, D, (a, a + width))
    assert r.min_value <= grid_min(numer, D, a, a + width, 20001) + 1e-10


def test_accept_reject_beta_zero_is_plain_resampling():
    src = np.array([0.1, 0.2, 0.3])
    out = accept_reject_residual(src, lambda v: np.ones_like(v), 200, 0.0, MaxwellianParams(1, 0, 1),
                                 RngStream(3))
    assert out.size == 200
    assert set(out) <= set(src)


def test_accept_reject_guard_on_vanishing_acceptance():
    M = MaxwellianParams(1, 0, 1)
    src = np.random.default_rng(0).standard_normal(100)
    with pytest.raises(AcceptanceError):
        accept_reject_residual(src, lambda v: eval_maxwellian(M, v), 5, 1.0, M, RngStream(1))
    with pytest.raises(ValueError):
        accept_reject_residual(np.empty(0), lambda v: v, 5, 0.5, M, RngStream(1))


def test_accept_reject_counts_clamps():
    M = MaxwellianParams(1, 0, 1)
    src = np.random.default_rng(0).standard_normal(1000)
    diag = {}
    # source density half the target: raw keep probability 1 - 0.9*2 < 0 everywhere
    accept_reject_residual(src, lambda v: 0.5 * eval_maxwellian(M, v) + 0.6 * (np.abs(v) > 1.5),
                           10, 0.9, M, RngStream(2), diag)
    assert diag["clamp_count"] > 0
