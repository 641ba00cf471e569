import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from selinf.errors import EmptyTruncation, ValidationError
from selinf.truncated import (
    IntervalUnion,
    TruncatedChi2Scaled,
    TruncatedT,
    solve_slice,
    trunc_chi2_mean,
    trunc_t_cdf,
    trunc_t_quantile,
)

INF = math.inf


# ---------------------------------------------------------------------------
# interval algebra


def test_interval_union_normalization():
    u = IntervalUnion.from_pairs([(3.0, 4.0), (1.0, 2.0), (1.5, 2.5), (5.0, 5.0)])
    assert u.intervals == ((1.0, 2.5), (3.0, 4.0))
    assert u.contains(1.7) and not u.contains(2.7)
    assert u.lower == 1.0 and u.upper == 4.0


def test_interval_intersection():
    a = IntervalUnion.from_pairs([(-INF, 0.0), (1.0, 3.0)])
    b = IntervalUnion.from_pairs([(-1.0, 2.0)])
    assert a.intersect(b).intervals == ((-1.0, 0.0), (1.0, 2.0))
    assert a.intersect(IntervalUnion.full()).intervals == a.intervals
    empty = a.intersect(IntervalUnion.from_pairs([(0.2, 0.8)]))
    assert empty.is_empty


def test_interval_rejects_nan():
    with pytest.raises(ValidationError):
        IntervalUnion.from_pairs([(math.nan, 1.0)])


# ---------------------------------------------------------------------------
# slice solver


def test_slice_vacuous_constraints():
    out = solve_slice([0.0, 0.0], [-1.0, 0.0], [1.0, 2.0], w=4.0, df=3)
    assert out.intervals == ((-INF, INF),)


def test_slice_single_linear_constraint():
    # nu=1, xi=0, b=1, w=1: t <= 1
    out = solve_slice([1.0], [0.0], [1.0], w=1.0, df=4)
    assert len(out.intervals) == 1
    lo, hi = out.intervals[0]
    assert lo == -INF and hi == pytest.approx(1.0, abs=1e-12)


def test_slice_two_sided_constraint():
    # xi < 0 with |xi| > |nu|: complement of an interval around the vertex
    out = solve_slice([0.5], [-2.0], [-1.0], w=1.0, df=5)
    assert len(out.intervals) >= 1
    # verify by direct evaluation on a grid
    grid = np.linspace(-50, 50, 20001)
    direct = 0.5 * grid + (-2.0) * np.sqrt(5 + grid**2) <= -1.0
    member = np.array([out.contains(t) for t in grid])
    assert np.array_equal(direct, member)


def test_slice_grid_oracle_random():
    rng = np.random.default_rng(50)
    checked = 0
    for _ in range(60):
        d = 5
        nu = rng.standard_normal(d)
        xi = rng.standard_normal(d)
        b = rng.standard_normal(d) + 1.2
        w = float(rng.uniform(0.3, 30.0))
        df = int(rng.integers(1, 40))
        try:
            out = solve_slice(nu, xi, b, w, df)
        except EmptyTruncation:
            continue
        checked += 1
        grid = np.linspace(-50.0, 50.0, 10001)
        lhs = grid[None, :] * math.sqrt(w) * nu[:, None] + xi[:, None] * np.sqrt(
            df + grid[None, :] ** 2
        )
        direct = np.all(lhs <= math.sqrt(w) * b[:, None], axis=0)
        member = np.array([out.contains(t) for t in grid])
        assert np.array_equal(direct, member)
    assert checked >= 30


def test_slice_empty_raises():
    with pytest.raises(EmptyTruncation):
        solve_slice([1.0, -1.0], [0.0, 0.0], [-5.0, -5.0], w=1.0, df=2)


# ---------------------------------------------------------------------------
# truncated Student-T


def test_t_cdf_no_truncation():
    dist = TruncatedT(df=9, omega=IntervalUnion.full())
    assert trunc_t_cdf(dist, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert trunc_t_cdf(dist, 1.3) == pytest.approx(stats.t.cdf(1.3, 9), abs=1e-12)


def test_t_cdf_halfline_boundaries():
    dist = TruncatedT(df=5, omega=IntervalUnion.from_pairs([(0.0, INF)]))
    assert trunc_t_cdf(dist, 0.0) == 0.0
    assert trunc_t_cdf(dist, 1e6) == pytest.approx(1.0, abs=1e-9)


def test_t_cdf_matches_rejection_monte_carlo():
    rng = np.random.default_rng(51)
    draws = rng.standard_t(5, size=10_000_000)
    kept = draws[(draws >= 1.0) & (draws <= 3.0)]
    emp = float(np.mean(kept <= 2.0))
    se = math.sqrt(emp * (1 - emp) / kept.size)
    dist = TruncatedT(df=5, omega=IntervalUnion.from_pairs([(1.0, 3.0)]))
    assert abs(trunc_t_cdf(dist, 2.0) - emp) <= 3.0 * se


def test_t_cdf_monotone_and_clamped():
    dist = TruncatedT(df=3, omega=IntervalUnion.from_pairs([(-2.0, -1.0), (0.5, 2.0)]))
    grid = np.linspace(-4.0, 4.0, 200)
    vals = [trunc_t_cdf(dist, t) for t in grid]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert trunc_t_cdf(dist, -3.0) == 0.0
    assert trunc_t_cdf(dist, 3.0) == 1.0


def test_t_cdf_deep_tail_against_quadrature():
    dist = TruncatedT(df=5, omega=IntervalUnion.from_pairs([(40.0, 41.0)]))
    num, _ = quad(lambda x: stats.t.pdf(x, 5), 40.0, 40.5)
    den, _ = quad(lambda x: stats.t.pdf(x, 5), 40.0, 41.0)
    assert trunc_t_cdf(dist, 40.5) == pytest.approx(num / den, rel=1e-9)


def test_t_quantile_roundtrip_and_edges():
    dist = TruncatedT(df=7, omega=IntervalUnion.full())
    assert trunc_t_quantile(dist, 0.5) == pytest.approx(0.0, abs=1e-9)
    rng = np.random.default_rng(52)
    dist2 = TruncatedT(df=4, omega=IntervalUnion.from_pairs([(-3.0, -1.0), (1.0, 3.0)]))
    for q in rng.uniform(0.01, 0.99, 50):
        t = trunc_t_quantile(dist2, float(q))
        assert trunc_t_cdf(dist2, t) == pytest.approx(q, abs=1e-8)
    dist3 = TruncatedT(df=5, omega=IntervalUnion.from_pairs([(1.0, 3.0)]))
    assert trunc_t_quantile(dist3, 1e-9) == pytest.approx(1.0, abs=1e-6)


def test_t_quantile_on_halfline_supports():
    for pairs in ([(-INF, -2.0)], [(2.0, INF)]):
        dist = TruncatedT(df=6, omega=IntervalUnion.from_pairs(pairs))
        for q in (0.05, 0.5, 0.95):
            t = trunc_t_quantile(dist, q)
            assert trunc_t_cdf(dist, t) == pytest.approx(q, abs=1e-8)


def test_truncated_t_empty_mass_raises():
    with pytest.raises(EmptyTruncation):
        TruncatedT(df=2, omega=IntervalUnion.from_pairs([]))


def test_slice_pure_curvature_constraints():
    # nu = 0, xi > 0: xi sqrt(df + t^2) <= sqrt(w) b bounds |t| symmetrically
    out = solve_slice([0.0], [1.0], [3.0], w=1.0, df=5)
    lim = math.sqrt(9.0 - 5.0)
    assert len(out.intervals) == 1
    lo, hi = out.intervals[0]
    assert lo == pytest.approx(-lim, abs=1e-9) and hi == pytest.approx(lim, abs=1e-9)
    with pytest.raises(EmptyTruncation):
        solve_slice([0.0], [1.0], [2.0], w=1.0, df=5)  # b^2 w < xi^2 df
    # nu = 0, xi < 0, b < 0: feasible only outside a symmetric interval
    out2 = solve_slice([0.0], [-1.0], [-2.0], w=1.0, df=1)
    lim2 = math.sqrt(4.0 - 1.0)
    assert len(out2.intervals) == 2
    assert out2.intervals[0][1] == pytest.approx(-lim2, abs=1e-9)
    assert out2.intervals[1][0] == pytest.approx(lim2, abs=1e-9)


def test_slice_extreme_scales():
    # the shrinking scale makes the positive-xi constraint infeasible, which
    # must surface as EmptyTruncation and agree with direct evaluation
    grid = np.linspace(-40.0, 40.0, 4001)
    nu = np.array([[1.0], [-0.5]])
    xi = np.array([[0.3], [-0.2]])
    b = np.array([[2.0], [1.5]])
    for w in (1e-12, 1.0, 1e12):
        lhs = grid[None, :] * math.sqrt(w) * nu + xi * np.sqrt(10 + grid[None, :] ** 2)
        direct = np.all(lhs <= math.sqrt(w) * b, axis=0)
        try:
            out = solve_slice(nu[:, 0], xi[:, 0], b[:, 0], w=w, df=10)
        except EmptyTruncation:
            assert not direct.any()
            continue
        member = np.array([out.contains(t) for t in grid])
        assert np.array_equal(direct, member)


def test_chi2_log_tails_against_mpmath():
    import mpmath

    from selinf.truncated import _chi2_logcdf, _chi2_logsf

    mpmath.mp.dps = 60
    # deep lower tail, including regimes far below float underflow
    for df, x in ((100, 1e-4), (100, 1.0), (10, 1e-8), (3, 1e-12), (240, 0.056)):
        ours = _chi2_logcdf(x, df)
        ref = float(mpmath.log(
            mpmath.gammainc(df / 2, 0, x / 2, regularized=True)
        ))
        assert ours == pytest.approx(ref, rel=1e-8, abs=1e-8)
    # deep upper tail
    for df, x in ((10, 3000.0), (100, 2500.0), (1, 1600.0), (4, 1500.0)):
        ours = _chi2_logsf(x, df)
        ref = float(mpmath.log(
            mpmath.gammainc(df / 2, x / 2, mpmath.inf, regularized=True)
        ))
        assert ours == pytest.approx(ref, rel=1e-6, abs=1e-6)


# ---------------------------------------------------------------------------
# truncated scaled chi-square mean


def test_h_identity_untruncated():
    for nu, s2 in ((1, 0.3), (10, 2.0), (100, 36.0)):
        assert trunc_chi2_mean(nu, s2, 0.0, INF) == pytest.approx(s2, rel=1e-12)


def test_h_truncation_clips_mean_and_matches_monte_carlo():
    nu, s2 = 100, 36.0
    L, U = 0.0, 40.0 * nu
    val = trunc_chi2_mean(nu, s2, L, U)
    assert val < s2
    rng = np.random.default_rng(53)
    z = s2 * rng.chisquare(nu, size=1_000_000)
    kept = z[(z >= L) & (z <= U)] / nu
    se = kept.std(ddof=1) / math.sqrt(kept.size)
    assert abs(val - kept.mean()) <= 3.0 * se


def test_h_point_mass_limit():
    nu = 12
    L = 30.0
    for U in (30.01, 30.0001):
        val = trunc_chi2_mean(nu, 5.0, L, U)
        assert val == pytest.approx(L / nu, rel=1e-3)


def test_h_monotone_in_sigma2_and_bounded():
    nu, L, U = 20, 5.0, 60.0
    grid = np.geomspace(0.05, 50.0, 40)
    vals = [trunc_chi2_mean(nu, float(s2), L, U) for s2 in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(L / nu <= v <= U / nu for v in vals)


def test_chi2_type_validation():
    with pytest.raises(ValidationError):
        TruncatedChi2Scaled(df=0, sigma2=1.0, L=0.0, U=1.0)
    with pytest.raises(ValidationError):
        TruncatedChi2Scaled(df=3, sigma2=-1.0, L=0.0, U=1.0)
    with pytest.raises(ValidationError):
        TruncatedChi2Scaled(df=3, sigma2=1.0, L=2.0, U=1.0)
    with pytest.raises(EmptyTruncation):
        TruncatedChi2Scaled(df=3, sigma2=1e-12, L=1e9, U=2e9)
    # valid construction passes
    TruncatedChi2Scaled(df=3, sigma2=1.0, L=0.5, U=9.0)
