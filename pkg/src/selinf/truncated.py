"""Interval-union algebra and truncated reference laws.

Three numeric jobs live here:

* solving the one-dimensional slice inequalities
  ``t sqrt(w) nu_i + xi_i sqrt(df + t^2) <= sqrt(w) b_i`` exactly, each of
  which contributes at most two intervals;
* the CDF and quantile of a Student-T restricted to an interval union;
* the conditional mean H of a scaled chi-square restricted to an interval,
  evaluated through incomplete-gamma identities rather than sampling.

All interval masses are computed in log space from the CDF on the left of
a split point and the survival function on the right, so ratios stay
meaningful down to reference probabilities near the underflow limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import EmptyTruncation, ValidationError

_NEG_INF = float("-inf")
_LOG_TINY = math.log(1e-300)


# ---------------------------------------------------------------------------
# interval unions


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted union of disjoint open-ended real intervals.

    Construct through :meth:`from_pairs`, which drops empty pieces, sorts,
    and merges overlapping or touching ones. Ends may be infinite.
    """

    intervals: tuple

    @classmethod
    def from_pairs(cls, pairs) -> "IntervalUnion":
        cleaned = []
        for lo, hi in pairs:
            lo, hi = float(lo), float(hi)
            if math.isnan(lo) or math.isnan(hi):
                raise ValidationError("interval ends must not be NaN")
            if lo < hi:
                cleaned.append((lo, hi))
        cleaned.sort()
        merged: list[tuple[float, float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
            else:
                merged.append((lo, hi))
        return cls(intervals=tuple(merged))

    @classmethod
    def full(cls) -> "IntervalUnion":
        return cls(intervals=((_NEG_INF, math.inf),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def lower(self) -> float:
        return self.intervals[0][0] if self.intervals else math.inf

    @property
    def upper(self) -> float:
        return self.intervals[-1][1] if self.intervals else _NEG_INF

    def contains(self, t: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= t <= hi + tol for lo, hi in self.intervals)

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        out = []
        for alo, ahi in self.intervals:
            for blo, bhi in other.intervals:
                lo, hi = max(alo, blo), min(ahi, bhi)
                if lo < hi:
                    out.append((lo, hi))
        return IntervalUnion.from_pairs(out)

    def clip_above(self, t: float) -> "IntervalUnion":
        """Intersection with (-inf, t]."""
        return self.intersect(IntervalUnion.from_pairs([(_NEG_INF, t)]))


# ---------------------------------------------------------------------------
# log-space interval masses


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0."""
    if x >= 0.0:
        return _NEG_INF
    if x > -0.6931471805599453:
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def _interval_logmass(logcdf, logsf, split, lo, hi) -> float:
    """log P(lo < Z <= hi) from pointwise log-CDF / log-SF callables."""
    if hi <= lo:
        return _NEG_INF
    if hi <= split:
        la = logcdf(hi)
        if la == _NEG_INF:
            return _NEG_INF
        lb = logcdf(lo)
        if lb == _NEG_INF:
            return la
        return la + _log1mexp(min(lb - la, 0.0))
    if lo >= split:
        la = logsf(lo)
        if la == _NEG_INF:
            return _NEG_INF
        lb = logsf(hi)
        if lb == _NEG_INF:
            return la
        return la + _log1mexp(min(lb - la, 0.0))
    left = _interval_logmass(logcdf, logsf, split, lo, split)
    right = _interval_logmass(logcdf, logsf, split, split, hi)
    return np.logaddexp(left, right)


def _union_logmass(logcdf, logsf, split, intervals) -> float:
    if not intervals:
        return _NEG_INF
    parts = [_interval_logmass(logcdf, logsf, split, lo, hi) for lo, hi in intervals]
    return float(special.logsumexp(parts))


def _t_logcdf(x: float, df: int) -> float:
    if x == math.inf:
        return 0.0
    if x == _NEG_INF:
        return _NEG_INF
    v = special.stdtr(df, x)
    return math.log(v) if v > 0.0 else _NEG_INF


def _t_logsf(x: float, df: int) -> float:
    # symmetry of the t distribution
    return _t_logcdf(-x, df)


def _chi2_logcdf(x: float, df: int) -> float:
    if x <= 0.0:
        return _NEG_INF
    if x == math.inf:
        return 0.0
    v = special.chdtr(df, x)
    if v > 0.0:
        return math.log(v)
    # deep lower tail: P(a, s) = s^a e^{-s} / Gamma(a+1) * sum_k s^k / prod(a+1..a+k)
    a, s = 0.5 * df, 0.5 * x
    series, term = 1.0, 1.0
    for k in range(1, 200):
        term *= s / (a + k)
        series += term
        if term < 1e-18 * series:
            break
    return a * math.log(s) - s - math.lgamma(a + 1.0) + math.log(series)


def _chi2_logsf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    if x == math.inf:
        return _NEG_INF
    v = special.chdtrc(df, x)
    if v > 0.0:
        return math.log(v)
    # deep upper tail: Q(a, s) ~ s^{a-1} e^{-s} / Gamma(a) * sum_k prod(a-1..a-k)/s^k
    a, s = 0.5 * df, 0.5 * x
    series, term = 1.0, 1.0
    for k in range(1, 60):
        factor = (a - k) / s
        term *= factor
        if abs(term) < 1e-18:
            break
        series += term
        if s <= a + k:  # asymptotic series not safe; give up at the computed partial sum
            break
    return (a - 1.0) * math.log(s) - s - math.lgamma(a) + math.log(max(series, 1e-30))


def gauss_logcdf(x: float) -> float:
    return float(special.log_ndtr(x))


def gauss_logsf(x: float) -> float:
    return float(special.log_ndtr(-x))


def gauss_interval_logmass(lo: float, hi: float) -> float:
    """log P(lo < Z <= hi) for standard normal Z."""
    return _interval_logmass(gauss_logcdf, gauss_logsf, 0.0, lo, hi)


# ---------------------------------------------------------------------------
# slice solver


def _solve_one_constraint(a: float, c: float, e: float, d: float) -> list:
    """Solution set of {t : a t + c sqrt(d + t^2) <= e} as interval pairs.

    All zeros of h(t) = a t + c sqrt(d + t^2) - e are roots of the squared
    quadratic; candidate subintervals between consecutive roots are kept or
    dropped by evaluating h at an interior point, which also rejects the
    extraneous roots introduced by squaring.
    """
    scale = max(abs(a), abs(c), abs(e) / max(1.0, math.sqrt(d)), 1e-300)

    def h(t):
        return a * t + c * math.sqrt(d + t * t) - e

    def slack_at(t):
        return 1e-9 * (abs(a * t) + abs(c) * math.sqrt(d + t * t) + abs(e) + scale)

    if abs(c) <= 1e-13 * scale:
        # effectively linear: a t <= e
        if abs(a) <= 1e-13 * scale:
            return [(_NEG_INF, math.inf)] if 0.0 <= e + slack_at(0.0) else []
        return [(_NEG_INF, e / a)] if a > 0 else [(e / a, math.inf)]

    A = a * a - c * c
    B = -2.0 * a * e
    Cq = e * e - c * c * d
    roots: list[float] = []
    if abs(A) <= 1e-13 * max(a * a, c * c):
        if B != 0.0:
            roots = [-Cq / B]
    else:
        disc = B * B - 4.0 * A * Cq
        if disc > 0.0:
            # numerically stable quadratic roots
            q = -0.5 * (B + math.copysign(math.sqrt(disc), B if B != 0 else 1.0))
            r1, r2 = q / A, (Cq / q if q != 0.0 else -B / A - q / A)
            roots = sorted((r1, r2))
        elif disc == 0.0:
            roots = [-B / (2.0 * A)]

    breakpoints = sorted(set(roots))
    edges = [_NEG_INF, *breakpoints, math.inf]
    kept = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == _NEG_INF and hi == math.inf:
            t_rep = 0.0
        elif lo == _NEG_INF:
            t_rep = hi - max(1.0, abs(hi))
        elif hi == math.inf:
            t_rep = lo + max(1.0, abs(lo))
        else:
            t_rep = 0.5 * (lo + hi)
        if h(t_rep) <= slack_at(t_rep):
            kept.append((lo, hi))
    return kept


def solve_slice(nu_vec, xi_vec, b, w: float, df: int) -> IntervalUnion:
    """Intersect the slice inequalities into an interval union.

    Solves ``{t : t sqrt(w) nu_i + xi_i sqrt(df + t^2) <= sqrt(w) b_i}``
    for every i and intersects. Raises :class:`EmptyTruncation` when the
    intersection is empty (the observed statistic always lies inside for
    constraints coming from a feasible event).
    """
    nu_vec = np.asarray(nu_vec, dtype=float)
    xi_vec = np.asarray(xi_vec, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (nu_vec.shape == xi_vec.shape == b.shape) or nu_vec.ndim != 1:
        raise ValidationError("nu, xi and b must be 1-d vectors of equal length")
    if nu_vec.size < 1:
        raise ValidationError("need at least one constraint")
    if w <= 0:
        raise ValidationError("w must be positive")
    if df < 1:
        raise ValidationError("df must be at least 1")
    sw = math.sqrt(w)
    out = IntervalUnion.full()
    for i in range(nu_vec.size):
        pieces = _solve_one_constraint(sw * nu_vec[i], xi_vec[i], sw * b[i], float(df))
        out = out.intersect(IntervalUnion.from_pairs(pieces))
        if out.is_empty:
            raise EmptyTruncation(f"constraint {i} empties the slice")
    return out


# ---------------------------------------------------------------------------
# truncated Student-T


@dataclass(frozen=True)
class TruncatedT:
    """Student-T with ``df`` degrees of freedom restricted to ``omega``."""

    df: int
    omega: IntervalUnion

    def __post_init__(self):
        if self.df < 1:
            raise ValidationError("df must be at least 1")
        if self.omega.is_empty:
            raise EmptyTruncation("truncation set is empty")
        if self._log_denominator() < _LOG_TINY:
            raise EmptyTruncation("truncation set has no Student-T mass")

    def _log_denominator(self) -> float:
        return _union_logmass(
            lambda x: _t_logcdf(x, self.df),
            lambda x: _t_logsf(x, self.df),
            0.0,
            self.omega.intervals,
        )


def trunc_t_cdf(dist: TruncatedT, t: float) -> float:
    """P(T <= t | T in omega) for a Student-T with dist.df degrees of freedom."""
    logcdf = lambda x: _t_logcdf(x, dist.df)
    logsf = lambda x: _t_logsf(x, dist.df)
    log_den = _union_logmass(logcdf, logsf, 0.0, dist.omega.intervals)
    below = dist.omega.clip_above(float(t))
    if below.is_empty:
        return 0.0
    log_num = _union_logmass(logcdf, logsf, 0.0, below.intervals)
    return float(min(1.0, max(0.0, math.exp(log_num - log_den))))


def trunc_t_quantile(dist: TruncatedT, q: float) -> float:
    """Inverse of :func:`trunc_t_cdf` by bisection to 1e-10 on t."""
    if not 0.0 < q < 1.0:
        raise ValidationError("q must lie in (0, 1)")
    lo, hi = dist.omega.lower, dist.omega.upper
    if not math.isfinite(lo):
        lo = min(-1.0, hi - 1.0 if math.isfinite(hi) else -1.0)
        while trunc_t_cdf(dist, lo) > q:
            lo = 2.0 * lo - 1.0
    if not math.isfinite(hi):
        hi = max(1.0, lo + 1.0)
        while trunc_t_cdf(dist, hi) < q:
            hi = 2.0 * hi + 1.0
    for _ in range(200):
        if hi - lo <= 1e-10:
            break
        mid = 0.5 * (lo + hi)
        if trunc_t_cdf(dist, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# truncated scaled chi-square


@dataclass(frozen=True)
class TruncatedChi2Scaled:
    """Law of sigma2 * chi2_df restricted to the interval [L, U]."""

    df: int
    sigma2: float
    L: float
    U: float

    def __post_init__(self):
        if self.df < 1:
            raise ValidationError("df must be at least 1")
        if self.sigma2 <= 0:
            raise ValidationError("sigma2 must be positive")
        if not 0.0 <= self.L < self.U:
            raise ValidationError("need 0 <= L < U")
        if _chi2_interval_logmass(self.df, self.L / self.sigma2, self.U / self.sigma2) < _LOG_TINY:
            raise EmptyTruncation("truncation interval has no chi-square mass")


def _chi2_interval_logmass(df: int, a: float, b: float) -> float:
    return _interval_logmass(
        lambda x: _chi2_logcdf(x, df),
        lambda x: _chi2_logsf(x, df),
        float(df),
        a,
        b,
    )


def trunc_chi2_mean(nu: int, sigma2: float, L: float, U: float) -> float:
    """Conditional mean H(L, U, sigma2) = E[sigma2 chi2_nu | in [L,U]] / nu.

    Evaluated deterministically through the identity
    ``E[chi2_nu 1{a <= chi2_nu <= b}] = nu (F_{nu+2}(b) - F_{nu+2}(a))``
    with F the chi-square CDF; no sampling involved. The untruncated case
    returns sigma2 exactly.
    """
    if nu < 1:
        raise ValidationError("nu must be at least 1")
    if sigma2 <= 0:
        raise ValidationError("sigma2 must be positive")
    if not 0.0 <= L < U:
        raise ValidationError("need 0 <= L < U")
    if L == 0.0 and U == math.inf:
        return float(sigma2)
    a, b = L / sigma2, U / sigma2
    log_den = _chi2_interval_logmass(nu, a, b)
    if log_den < _LOG_TINY:
        raise EmptyTruncation(
            f"interval [{L:.3g}, {U:.3g}] has no mass at sigma2={sigma2:.3g}"
        )
    log_num = _chi2_interval_logmass(nu + 2, a, b)
    return float(sigma2 * math.exp(log_num - log_den))
