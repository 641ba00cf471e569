"""Post-selection inference for the selected coefficients and the noise level.

Coefficient hypotheses are tested exactly: the pivot
``(eta'y - theta) / sigma_hat(y)`` is, conditionally on the selection
event and the sufficient statistics of the nuisance parameters, a
Student-T with the residual degrees of freedom restricted to an interval
union computed from the event in closed form. Confidence intervals use a
truncated-Gaussian approximation with a plug-in variance (a spherical
concentration argument makes the approximation accurate when the model is
small relative to n); the exact truncated-T inversion is available as a
slow path.

The noise level is estimated by pseudo-likelihood: conditionally on the
fitted part of the response, the squared residual norm is a scaled
chi-square restricted to an interval, and the estimate matches its
conditional mean to the observed value. A regularized variant shrinks by
``df^{-1/2}`` with a bias correction so that the untruncated case returns
the plain OLS residual mean square exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BracketFailure,
    InfeasibleObserved,
    NoRoot,
    ValidationError,
)
from .events import ActiveGeometry, QuasiAffineEvent, build_event
from .model import (
    ProjectionPair,
    RegressionData,
    SelectedModel,
    _frozen,
    build_projection,
    ols_sigma2,
)
from .solver import SqrtLassoFit
from .truncated import (
    TruncatedT,
    gauss_interval_logmass,
    solve_slice,
    trunc_chi2_mean,
    trunc_t_cdf,
)

_ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class TestSpec:
    """One coefficient hypothesis: column ``j`` (must be active),
    hypothesized value ``theta0`` of the unit-direction mean, and the
    alternative."""

    j: int
    theta0: float = 0.0
    alternative: str = "two-sided"

    def __post_init__(self):
        if self.alternative not in _ALTERNATIVES:
            raise ValidationError(f"alternative must be one of {_ALTERNATIVES}")


def _active_position(model: SelectedModel, j: int) -> int:
    pos = int(np.searchsorted(model.active, j))
    if pos >= model.size or model.active[pos] != j:
        raise ValidationError(f"column {j} is not in the active set")
    return pos


def _pivot_pieces(event, geom, data, proj, pos, theta):
    """Common geometry for the slice of one coefficient direction."""
    eta = geom.eta_rows[pos]
    y = data.y
    Py = proj.P @ y
    eta_y = float(eta @ y)
    V = Py - eta_y * eta
    resid2 = float(np.sum((y - Py) ** 2))
    w = resid2 + (eta_y - theta) ** 2
    sigma_hat = math.sqrt(resid2 / event.df)
    nu = event.C @ eta
    xi = event.C @ (theta * eta + V)
    return eta_y, sigma_hat, nu, xi, w


def selective_pvalue(
    event: QuasiAffineEvent,
    geom: ActiveGeometry,
    data: RegressionData,
    proj: ProjectionPair,
    spec: TestSpec,
    model: SelectedModel,
) -> float:
    """Exact selective p-value for one active coefficient.

    Forms the pivot ``tau = (eta'y - theta0) / sigma_hat(y)``, solves the
    event slice into the truncation set, and evaluates the tail of the
    truncated Student-T with ``event.df`` degrees of freedom. Two-sided
    p-values use ``2 min(F, 1-F)``.
    """
    if not event.contains(data.y):
        raise InfeasibleObserved("observed response does not satisfy the event")
    pos = _active_position(model, spec.j)
    theta = float(spec.theta0)
    eta_y, sigma_hat, nu, xi, w = _pivot_pieces(event, geom, data, proj, pos, theta)
    tau = (eta_y - theta) / sigma_hat
    omega = solve_slice(nu, xi, event.b, w, event.df)
    F = trunc_t_cdf(TruncatedT(df=event.df, omega=omega), tau)
    if spec.alternative == "two-sided":
        return float(2.0 * min(F, 1.0 - F))
    if spec.alternative == "greater":
        return float(1.0 - F)
    return float(F)


# ---------------------------------------------------------------------------
# Gaussian-approximation intervals


def _gauss_slice_bounds(event, geom, data, proj, pos):
    """Truncation interval for eta'z once (P - eta eta')z is frozen.

    With the residual scale frozen at its observed value the constraints
    become affine in u = eta'z: ``u * nu_i <= (sigma_hat(y) b - C V(y))_i``.
    """
    eta = geom.eta_rows[pos]
    y = data.y
    Py = proj.P @ y
    u_obs = float(eta @ y)
    V = Py - u_obs * eta
    nu = event.C @ eta
    rhs = event.sigma_hat(y) * event.b - event.C @ V
    lo, hi = -math.inf, math.inf
    for ni, ri in zip(nu, rhs):
        if ni > 0:
            hi = min(hi, ri / ni)
        elif ni < 0:
            lo = max(lo, ri / ni)
    return u_obs, lo, hi


def _trunc_gauss_cdf(u, mean, sd, lo, hi):
    """P(U <= u | U in [lo, hi]) for U ~ N(mean, sd^2), in log space."""
    a, b, x = (lo - mean) / sd, (hi - mean) / sd, (u - mean) / sd
    log_den = gauss_interval_logmass(a, b)
    if log_den == -math.inf:
        # the window is numerically massless; decide by which side we are on
        return 0.0 if x <= a else 1.0
    if x <= a:
        return 0.0
    log_num = gauss_interval_logmass(a, min(x, b))
    return float(min(1.0, math.exp(log_num - log_den)))


def gaussian_approx_pvalue(
    event, geom, data, proj, spec: TestSpec, model: SelectedModel, sigma2_plugin: float
) -> float:
    """Truncated-Gaussian plug-in p-value (approximation to the exact test)."""
    pos = _active_position(model, spec.j)
    u_obs, lo, hi = _gauss_slice_bounds(event, geom, data, proj, pos)
    F = _trunc_gauss_cdf(u_obs, float(spec.theta0), math.sqrt(sigma2_plugin), lo, hi)
    if spec.alternative == "two-sided":
        return float(2.0 * min(F, 1.0 - F))
    if spec.alternative == "greater":
        return float(1.0 - F)
    return float(F)


def _invert_monotone_cdf(F_of_theta, target, start, step, cap_lo, cap_hi):
    """Solve F(theta) = target for a decreasing F by bracket + bisection.

    Expands geometrically from ``start`` toward the root until the target
    is straddled, never beyond [cap_lo, cap_hi].
    """
    x = float(start)
    if F_of_theta(x) >= target:
        lo, hi = x, min(x + step, cap_hi)
        while F_of_theta(hi) >= target:
            if hi >= cap_hi:
                raise BracketFailure("no sign change within the allowed bracket")
            step *= 2.0
            lo, hi = hi, min(hi + step, cap_hi)
    else:
        hi, lo = x, max(x - step, cap_lo)
        while F_of_theta(lo) < target:
            if lo <= cap_lo:
                raise BracketFailure("no sign change within the allowed bracket")
            step *= 2.0
            hi, lo = lo, max(lo - step, cap_lo)
    # invariant: F(lo) >= target > F(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F_of_theta(mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def gaussian_approx_interval(
    event: QuasiAffineEvent,
    geom: ActiveGeometry,
    data: RegressionData,
    proj: ProjectionPair,
    spec: TestSpec,
    model: SelectedModel,
    level: float,
    sigma2_plugin: float,
    on_bracket_failure: str = "raise",
) -> tuple:
    """Confidence interval for eta'mu from the truncated-Gaussian pivot.

    Inverts the test based on ``eta'z - theta`` given ``(P - eta eta')z``
    and the event with the residual scale frozen at its observed value, so
    the truncation interval does not move with theta and the pivot CDF is
    monotone in theta. Endpoints are found by geometric bracket expansion
    from 4 plug-in standard deviations (capped at 20) and bisection.

    Statistics barely inside their truncation window have genuinely very
    long intervals whose endpoint can lie beyond the bracket cap. By
    default that raises :class:`BracketFailure` (never a silent finite
    clip); with ``on_bracket_failure="unbounded"`` the failed side is
    reported as infinite instead.
    """
    if not 0.5 < level < 1.0:
        raise ValidationError("level must lie in (0.5, 1)")
    if sigma2_plugin <= 0:
        raise ValidationError("sigma2_plugin must be positive")
    if on_bracket_failure not in ("raise", "unbounded"):
        raise ValidationError("on_bracket_failure must be 'raise' or 'unbounded'")
    pos = _active_position(model, spec.j)
    u_obs, lo_t, hi_t = _gauss_slice_bounds(event, geom, data, proj, pos)
    sd = math.sqrt(sigma2_plugin)
    if u_obs < lo_t - 1e-6 * sd or u_obs > hi_t + 1e-6 * sd:
        raise InfeasibleObserved("observed statistic outside its own truncation window")

    def F(theta):
        return _trunc_gauss_cdf(u_obs, theta, sd, lo_t, hi_t)

    alpha = 1.0 - level
    cap_lo, cap_hi = u_obs - 20.0 * sd, u_obs + 20.0 * sd
    try:
        theta_lo = _invert_monotone_cdf(
            F, 1.0 - alpha / 2, u_obs - 4.0 * sd, 4.0 * sd, cap_lo, cap_hi
        )
    except BracketFailure:
        if on_bracket_failure == "raise":
            raise
        theta_lo = -math.inf
    try:
        theta_hi = _invert_monotone_cdf(
            F, alpha / 2, u_obs + 4.0 * sd, 4.0 * sd, cap_lo, cap_hi
        )
    except BracketFailure:
        if on_bracket_failure == "raise":
            raise
        theta_hi = math.inf
    return float(theta_lo), float(theta_hi)


def exact_t_interval(
    event: QuasiAffineEvent,
    geom: ActiveGeometry,
    data: RegressionData,
    proj: ProjectionPair,
    spec: TestSpec,
    model: SelectedModel,
    level: float,
    on_bracket_failure: str = "raise",
) -> tuple:
    """Exact truncated-T interval (slow path; the truncation set moves
    with theta, so every bisection step re-solves the slice)."""
    if not 0.5 < level < 1.0:
        raise ValidationError("level must lie in (0.5, 1)")
    pos = _active_position(model, spec.j)

    def F(theta):
        eta_y, sigma_hat, nu, xi, w = _pivot_pieces(event, geom, data, proj, pos, theta)
        tau = (eta_y - theta) / sigma_hat
        omega = solve_slice(nu, xi, event.b, w, event.df)
        return trunc_t_cdf(TruncatedT(df=event.df, omega=omega), tau)

    eta = geom.eta_rows[pos]
    u_obs = float(eta @ data.y)
    sd = event.sigma_hat(data.y)
    alpha = 1.0 - level
    cap_lo, cap_hi = u_obs - 40.0 * sd, u_obs + 40.0 * sd
    try:
        theta_lo = _invert_monotone_cdf(
            F, 1.0 - alpha / 2, u_obs - 4.0 * sd, 4.0 * sd, cap_lo, cap_hi
        )
    except BracketFailure:
        if on_bracket_failure == "raise":
            raise
        theta_lo = -math.inf
    try:
        theta_hi = _invert_monotone_cdf(
            F, alpha / 2, u_obs + 4.0 * sd, 4.0 * sd, cap_lo, cap_hi
        )
    except BracketFailure:
        if on_bracket_failure == "raise":
            raise
        theta_hi = math.inf
    return float(theta_lo), float(theta_hi)


# ---------------------------------------------------------------------------
# pseudo-likelihood variance estimation


def _sigma_hat_window(event: QuasiAffineEvent, data: RegressionData) -> tuple:
    """Bounds [lo, hi] the event places on sigma_hat_P(y) at fixed Py."""
    Cy = event.C @ data.y
    lo, hi = 0.0, math.inf
    for ci, bi in zip(Cy, event.b):
        if bi > 0:
            lo = max(lo, ci / bi)
        elif bi < 0:
            hi = min(hi, ci / bi)
    return lo, hi


def _H_or_limit(df, s2, L, U):
    """H with exact limits where the reference mass underflows the guard.

    Far past the truncation window the conditional law degenerates: for
    s2 far above U the density on [L, U] is the pure power t^(df/2 - 1)
    whose mean is the increasing limit of H; for s2 far below L the law
    concentrates at L. Substituting the limits keeps root finding well
    defined while :func:`trunc_chi2_mean` keeps its mass guard.
    """
    from .errors import EmptyTruncation

    try:
        return trunc_chi2_mean(df, s2, L, U)
    except EmptyTruncation:
        if math.isfinite(U) and U / s2 < df:
            a = 0.5 * df
            r = L / U
            num = -math.expm1((a + 1.0) * math.log(r)) if r > 0 else 1.0
            den = -math.expm1(a * math.log(r)) if r > 0 else 1.0
            return (a / (a + 1.0)) * U * (num / den) / df
        if L > 0 and L / s2 > df:
            return L / df
        raise


def _pseudolik_root(event, data, proj, theta_reg):
    if event.df < 1:
        raise ValidationError("need at least one residual degree of freedom")
    s2_obs = ols_sigma2(data, proj)
    lo, hi = _sigma_hat_window(event, data)
    if lo >= hi:
        raise NoRoot(f"empty residual-scale window [{lo:.3g}, {hi:.3g}]")
    df = event.df
    L = df * lo * lo
    U = df * hi * hi if math.isfinite(hi) else math.inf
    if L == 0.0 and U == math.inf:
        return float(s2_obs)
    if not (L / df <= s2_obs * (1 + 1e-9) and s2_obs * (1 - 1e-9) <= U / df):
        raise NoRoot(
            "observed residual mean square outside the truncation window "
            "(internal error: the event should contain the data)"
        )

    def g(s2):
        return _H_or_limit(df, s2, L, U) + theta_reg * s2 - (1.0 + theta_reg) * s2_obs

    s_lo = s_hi = s2_obs
    g_obs = g(s2_obs)
    if g_obs > 0:
        for _ in range(400):
            s_lo *= 0.25
            if g(s_lo) <= 0:
                break
            if s_lo < 1e-280:
                raise NoRoot("no lower bracket for the pseudo-likelihood root")
        else:
            raise NoRoot("no lower bracket for the pseudo-likelihood root")
    else:
        for _ in range(400):
            s_hi *= 4.0
            if g(s_hi) >= 0:
                break
            if s_hi > 1e12 * s2_obs:
                raise NoRoot(
                    "observed residual mean square at or beyond the attainable "
                    "truncated mean; the unregularized estimate diverges"
                )
        else:
            raise NoRoot("no upper bracket for the pseudo-likelihood root")
    # bisection on log sigma^2 to 1e-8 relative
    for _ in range(400):
        if s_hi / s_lo <= 1.0 + 1e-8:
            break
        mid = math.sqrt(s_lo * s_hi)
        if g(mid) <= 0:
            s_lo = mid
        else:
            s_hi = mid
    return float(math.sqrt(s_lo * s_hi))


def sigma2_pseudolik(
    event: QuasiAffineEvent, data: RegressionData, proj: ProjectionPair
) -> float:
    """Pseudo-likelihood variance estimate.

    Solves ``H_df(L, U, sigma^2) = sigma_hat_P(y)^2`` where [L, U] is the
    truncation interval of the squared residual norm implied by the event,
    by bisection on log sigma^2. Untruncated events return the OLS
    residual mean square exactly. Raises :class:`NoRoot` when the observed
    value sits at or beyond the attainable truncated mean (the plateau
    near the upper truncation limit), where this estimator diverges.
    """
    return _pseudolik_root(event, data, proj, theta_reg=0.0)


def sigma2_pseudolik_regularized(
    event: QuasiAffineEvent, data: RegressionData, proj: ProjectionPair
) -> float:
    """Regularized pseudo-likelihood variance estimate.

    Root of ``H_df(L, U, s) + theta s - (1 + theta) sigma_hat_P(y)^2``
    with ``theta = df^{-1/2}``; the added term removes the divergence near
    the truncation boundary and vanishes as df grows, and the bias
    correction keeps the untruncated case exactly equal to OLS.
    """
    return _pseudolik_root(event, data, proj, theta_reg=event.df ** -0.5)


# ---------------------------------------------------------------------------
# per-model report


@dataclass(frozen=True)
class SelectiveReport:
    """Per-variable selective inference plus variance estimates.

    ``estimate`` holds the refitted coefficients ``e_j' X_E^+ y``;
    intervals are on the same scale. Selective intervals need not contain
    the point estimate. ``sigma2_pl`` is NaN when the unregularized
    estimator has no finite root.
    """

    active: np.ndarray
    signs: np.ndarray
    names: tuple | None
    estimate: np.ndarray
    p_value: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    ci_level: float
    sigma2_ols: float
    sigma2_pl: float
    sigma2_plr: float
    lam: float
    kappa: float | None = None

    def __post_init__(self):
        for name in ("active", "signs", "estimate", "p_value", "ci_lo", "ci_hi"):
            object.__setattr__(self, name, _frozen(getattr(self, name),
                                                   dtype=np.int64 if name in ("active", "signs") else float))
        if self.p_value.size and (self.p_value.min() < 0 or self.p_value.max() > 1):
            raise ValidationError("p-values must lie in [0, 1]")
        if self.ci_lo.size and np.any(self.ci_lo >= self.ci_hi):
            raise ValidationError("interval endpoints must be ordered")

    def to_dict(self) -> dict:
        def clean(x):
            return [v if math.isfinite(v) else None for v in x]

        return {
            "schema": "selinf/v1",
            "active": self.active.tolist(),
            "signs": self.signs.tolist(),
            "names": list(self.names) if self.names is not None else None,
            "estimate": self.estimate.tolist(),
            "p_value": self.p_value.tolist(),
            "ci_lo": clean(self.ci_lo),
            "ci_hi": clean(self.ci_hi),
            "ci_level": self.ci_level,
            "sigma2_ols": self.sigma2_ols,
            "sigma2_pl": self.sigma2_pl if math.isfinite(self.sigma2_pl) else None,
            "sigma2_plr": self.sigma2_plr,
            "lambda": self.lam,
            "kappa": self.kappa,
        }

    def to_table(self) -> str:
        lines = [
            f"{'variable':>12} {'estimate':>12} {'p-value':>10} "
            f"{'ci_lo':>12} {'ci_hi':>12}   (level {self.ci_level:g})"
        ]
        for i, j in enumerate(self.active):
            name = self.names[i] if self.names is not None else f"x{j}"
            lines.append(
                f"{name:>12} {self.estimate[i]:>12.5g} {self.p_value[i]:>10.4g} "
                f"{self.ci_lo[i]:>12.5g} {self.ci_hi[i]:>12.5g}"
            )
        lines.append(
            f"sigma2: ols={self.sigma2_ols:.5g} pl={self.sigma2_pl:.5g} "
            f"plr={self.sigma2_plr:.5g}   lambda={self.lam:.5g}"
        )
        return "\n".join(lines)


def selective_report(
    data: RegressionData,
    fit: SqrtLassoFit,
    proj: ProjectionPair | None = None,
    level: float = 0.9,
    sigma: str | float = "plr",
    exact: bool = False,
    kappa: float | None = None,
) -> SelectiveReport:
    """Assemble p-values, intervals and variance estimates for a fit.

    ``sigma`` chooses the plug-in variance for the intervals: one of
    "plr", "pl", "ols" or an explicit positive number. ``exact`` switches
    the intervals to the truncated-T inversion.
    """
    proj = proj if proj is not None else build_projection(data, fit.model)
    s2_ols = ols_sigma2(data, proj)
    model = fit.model
    names = (
        tuple(data.column_names[j] for j in model.active)
        if data.column_names is not None
        else None
    )
    if model.size == 0:
        empty = np.zeros(0)
        return SelectiveReport(
            active=np.zeros(0, dtype=np.int64), signs=np.zeros(0, dtype=np.int64),
            names=names, estimate=empty, p_value=empty, ci_lo=empty, ci_hi=empty,
            ci_level=level, sigma2_ols=s2_ols, sigma2_pl=s2_ols, sigma2_plr=s2_ols,
            lam=fit.lam, kappa=kappa,
        )
    event, geom, _ = build_event(fit, data, proj)
    try:
        s2_pl = sigma2_pseudolik(event, data, proj)
    except NoRoot:
        s2_pl = math.nan
    s2_plr = sigma2_pseudolik_regularized(event, data, proj)
    if isinstance(sigma, str):
        plugin = {"plr": s2_plr, "pl": s2_pl, "ols": s2_ols}.get(sigma)
        if plugin is None:
            raise ValidationError("sigma must be 'plr', 'pl', 'ols' or a number")
        if math.isnan(plugin):
            raise ValidationError("unregularized estimate has no root; choose another sigma")
    else:
        plugin = float(sigma)
        if plugin <= 0:
            raise ValidationError("sigma must be positive")

    row_norms = np.linalg.norm(proj.pinv, axis=1)
    estimate = proj.pinv @ data.y
    pvals = np.empty(model.size)
    ci_lo = np.empty(model.size)
    ci_hi = np.empty(model.size)
    for pos, j in enumerate(model.active):
        spec = TestSpec(j=int(j))
        pvals[pos] = selective_pvalue(event, geom, data, proj, spec, model)
        if exact:
            lo, hi = exact_t_interval(
                event, geom, data, proj, spec, model, level,
                on_bracket_failure="unbounded",
            )
        else:
            lo, hi = gaussian_approx_interval(
                event, geom, data, proj, spec, model, level, plugin,
                on_bracket_failure="unbounded",
            )
        ci_lo[pos] = lo * row_norms[pos]
        ci_hi[pos] = hi * row_norms[pos]
    return SelectiveReport(
        active=model.active, signs=model.signs, names=names,
        estimate=estimate, p_value=pvals, ci_lo=ci_lo, ci_hi=ci_hi,
        ci_level=level, sigma2_ols=s2_ols, sigma2_pl=s2_pl, sigma2_plr=s2_plr,
        lam=fit.lam, kappa=kappa,
    )
