"""Square-root LASSO solver and scale-free penalty rule.

The program solved is

    minimize_beta ||y - X beta||_2 + lam * ||beta||_1

via an alternating scheme: freeze the residual scale, solve the implied
quadratic LASSO by cyclic coordinate descent warm-started at the previous
iterate, update the scale, repeat. Each quadratic subproblem majorizes the
square-root objective at the current iterate, so the objective is
non-increasing across iterations, and any fixed point satisfies the
square-root KKT system exactly.

The penalty rule is the Monte-Carlo expectation
``lam = kappa * E[ ||X' eps||_inf / ||eps||_2 ]`` over standard Gaussian
``eps``, which does not involve the noise level of y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import (
    DegenerateScaling,
    InterpolationDegenerate,
    NonConvergence,
    ValidationError,
)
from .model import ProjectionPair, RegressionData, SelectedModel, _frozen

# |beta_j| above this is treated as active.
ACTIVE_TOL = 1e-10

# Monte-Carlo draws per substream block in choose_lambda; results do not
# depend on how blocks are scheduled.
_LAMBDA_BLOCK = 256


@dataclass(frozen=True)
class TuningSpec:
    """Configuration of the Monte-Carlo penalty rule.

    kappa is the unitless multiplier on the expectation (values at or
    below 1 are typical), mc_draws the number of Gaussian draws, and seed
    makes the rule bit-reproducible.
    """

    kappa: float = 0.8
    mc_draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.5:
            raise ValidationError("kappa must lie in (0, 1.5]")
        if int(self.mc_draws) != self.mc_draws or self.mc_draws < 1:
            raise ValidationError("mc_draws must be a positive integer")


@dataclass(frozen=True)
class SqrtLassoFit:
    """Converged square-root LASSO solution.

    Fields
    ------
    beta : (p,) solution, exactly zero off the active set
    model : active set E and signs z_E
    subgrad : (p,) subgradient of the l1 norm at the solution; equals
        sign(beta_j) on E and X_j'r / (lam ||r||) off E
    lam : penalty level
    residual_norm : ||y - X beta||_2
    kkt_residual : || X'r/||r|| - lam * subgrad ||_inf with the off-active
        subgradient clipped to [-1, 1]
    n_sweeps : coordinate-descent sweeps consumed
    """

    beta: np.ndarray
    model: SelectedModel
    subgrad: np.ndarray
    lam: float
    residual_norm: float
    kkt_residual: float
    n_sweeps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(self.beta))
        object.__setattr__(self, "subgrad", _frozen(self.subgrad))
        if self.lam <= 0:
            raise ValidationError("lam must be positive")
        if np.abs(self.subgrad).max(initial=0.0) > 1.0 + 1e-6:
            raise ValidationError("subgradient exceeds 1 beyond tolerance")


@numba.njit(cache=True)
def _cd_sweeps(X, col_sq, gamma, beta, r, inner_tol, max_sweeps):
    """Cyclic coordinate descent on 0.5||y - X b||^2 + gamma ||b||_1.

    X must be Fortran-ordered; beta and r (= y - X beta) are updated in
    place. Alternates one full sweep with sweeps over the current support
    until a full sweep moves every coordinate by at most inner_tol on the
    ||x_j||-scaled scale. Returns (sweeps used, converged flag).
    """
    n, p = X.shape
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            cj = col_sq[j]
            if cj <= 0.0:
                continue
            bj = beta[j]
            rho = cj * bj
            for i in range(n):
                rho += X[i, j] * r[i]
            if rho > gamma:
                bnew = (rho - gamma) / cj
            elif rho < -gamma:
                bnew = (rho + gamma) / cj
            else:
                bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                beta[j] = bnew
                for i in range(n):
                    r[i] -= d * X[i, j]
                ad = abs(d) * np.sqrt(cj)
                if ad > max_delta:
                    max_delta = ad
        if max_delta <= inner_tol:
            return sweeps, True
        # support-restricted sweeps between full passes
        while sweeps < max_sweeps:
            sweeps += 1
            max_delta = 0.0
            for j in range(p):
                bj = beta[j]
                if bj == 0.0:
                    continue
                cj = col_sq[j]
                rho = cj * bj
                for i in range(n):
                    rho += X[i, j] * r[i]
                if rho > gamma:
                    bnew = (rho - gamma) / cj
                elif rho < -gamma:
                    bnew = (rho + gamma) / cj
                else:
                    bnew = 0.0
                d = bnew - bj
                if d != 0.0:
                    beta[j] = bnew
                    for i in range(n):
                        r[i] -= d * X[i, j]
                    ad = abs(d) * np.sqrt(cj)
                    if ad > max_delta:
                        max_delta = ad
            if max_delta <= inner_tol:
                break
    return sweeps, False


def solve_lasso(X, y, gamma, beta0=None, tol=1e-12, max_sweeps=100_000):
    """Solve 0.5||y - X b||^2 + gamma ||b||_1 by cyclic coordinate descent.

    ``tol`` bounds the scaled coefficient change of the last full sweep.
    Returns the solution vector.
    """
    XF = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    col_sq = np.ascontiguousarray((XF**2).sum(axis=0))
    beta = np.zeros(XF.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    r = y - XF @ beta
    _, converged = _cd_sweeps(XF, col_sq, float(gamma), beta, r, float(tol), max_sweeps)
    if not converged:
        raise NonConvergence(f"coordinate descent: {max_sweeps} sweeps exhausted")
    return beta


def choose_lambda(X, spec: TuningSpec | None = None) -> float:
    """Scale-free Monte-Carlo penalty level.

    Returns ``kappa * mean_m( ||X' eps_m||_inf / ||eps_m||_2 )`` with
    eps_m i.i.d. standard Gaussian n-vectors. Deterministic given
    ``spec.seed``: draws are generated in fixed-size substream blocks
    spawned from the seed, so the value is independent of scheduling.
    """
    spec = spec or TuningSpec()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a matrix")
    if not np.any(X):
        raise ValidationError("X must be nonzero")
    if spec.mc_draws < 100:
        raise ValidationError("mc_draws must be at least 100")
    n = X.shape[0]
    m_total = int(spec.mc_draws)
    n_blocks = (m_total + _LAMBDA_BLOCK - 1) // _LAMBDA_BLOCK
    children = np.random.SeedSequence(spec.seed).spawn(n_blocks)
    total = 0.0
    for i, child in enumerate(children):
        m = min(_LAMBDA_BLOCK, m_total - i * _LAMBDA_BLOCK)
        eps = np.random.default_rng(child).standard_normal((m, n))
        total += float(
            (np.abs(eps @ X).max(axis=1) / np.linalg.norm(eps, axis=1)).sum()
        )
    return spec.kappa * total / m_total


def _kkt_parts(X, y, beta, lam):
    """Residual, scale, subgradient and KKT residual at beta."""
    r = y - X @ beta
    c = float(np.linalg.norm(r))
    if c == 0.0:
        return r, c, None, np.inf
    g = X.T @ r / c
    raw = g / lam
    active = np.abs(beta) > ACTIVE_TOL
    subgrad = raw.copy()
    subgrad[active] = np.sign(beta[active])
    clipped = np.clip(raw, -1.0, 1.0)
    clipped[active] = np.sign(beta[active])
    kkt = float(np.abs(g - lam * clipped).max(initial=0.0))
    return r, c, subgrad, kkt


def fit_sqrt_lasso(
    data: RegressionData,
    lam: float,
    tol: float = 1e-8,
    max_sweeps: int = 50_000,
    _trace: list | None = None,
) -> SqrtLassoFit:
    """Fit the square-root LASSO at penalty ``lam``.

    Alternates coordinate-descent LASSO solves at gamma = lam * ||r||
    with scale updates until the scale is stable to ``tol`` (relative) and
    the square-root KKT residual is at most ``tol``. ``max_sweeps`` bounds
    the total coordinate sweeps across all subproblem solves.

    Raises
    ------
    InterpolationDegenerate
        If the residual norm falls below 1e-10 * ||y|| (penalty too small
        for this data).
    NonConvergence
        If the sweep budget runs out first.
    """
    if lam <= 0:
        raise ValidationError("lam must be positive")
    X = np.asfortranarray(data.X)
    y = data.y
    norm_y = float(np.linalg.norm(y))
    if norm_y == 0.0:
        raise InterpolationDegenerate("response is identically zero")
    col_sq = np.ascontiguousarray((X**2).sum(axis=0))

    beta = np.zeros(data.p)
    r = y.copy()
    gamma = lam * norm_y
    inner_tol = 0.01 * tol * gamma
    budget = int(max_sweeps)
    used_total = 0

    for _ in range(200):
        used, _ = _cd_sweeps(X, col_sq, gamma, beta, r, inner_tol, budget - used_total)
        used_total += used
        beta[np.abs(beta) <= ACTIVE_TOL] = 0.0
        r, c, subgrad, kkt = _kkt_parts(X, y, beta, lam)
        if c < 1e-10 * norm_y:
            raise InterpolationDegenerate(
                f"residual norm {c:.3e} below 1e-10 * ||y||; lam too small"
            )
        if _trace is not None:
            _trace.append(c + lam * float(np.abs(beta).sum()))
        gamma_new = lam * c
        scale_stable = abs(gamma_new - gamma) <= tol * gamma_new
        if scale_stable and kkt <= tol:
            active = np.flatnonzero(np.abs(beta) > ACTIVE_TOL)
            model = SelectedModel(
                active=active, signs=np.sign(beta[active]).astype(np.int64)
            )
            return SqrtLassoFit(
                beta=beta,
                model=model,
                subgrad=subgrad,
                lam=float(lam),
                residual_norm=c,
                kkt_residual=kkt,
                n_sweeps=used_total,
            )
        if used_total >= budget:
            raise NonConvergence(
                f"sweep budget {max_sweeps} exhausted (kkt residual {kkt:.3e})"
            )
        if scale_stable:
            # scale converged but coordinates have not: tighten the subproblem
            inner_tol = max(inner_tol * 0.1, 1e-16 * gamma_new)
        gamma = gamma_new
    raise NonConvergence("alternating scale iteration failed to stabilize")


def check_kkt(fit: SqrtLassoFit, data: RegressionData) -> float:
    """Recompute the KKT residual of a fit from scratch.

    Returns ``|| X'r/||r|| - lam * z ||_inf`` with z the subgradient
    implied by the stored solution. The off-active subgradient entries are
    verified to lie inside [-1, 1] (up to rounding slack).
    """
    r = data.y - data.X @ fit.beta
    c = float(np.linalg.norm(r))
    if c <= 0:
        raise ValidationError("check_kkt requires a positive residual norm")
    _, _, subgrad, kkt = _kkt_parts(data.X, data.y, fit.beta, fit.lam)
    inactive = np.abs(fit.beta) <= ACTIVE_TOL
    assert np.all(np.abs(subgrad[inactive]) < 1.0 + 1e-9), (
        "inactive subgradient on the boundary: solution not unique"
    )
    return kkt


def lasso_equivalent_gamma(
    fit: SqrtLassoFit, proj: ProjectionPair, sigma2_ols: float
) -> float:
    """Quadratic-LASSO penalty reproducing this square-root LASSO solution.

    Returns ``lam * sqrt( sigma2_ols * (n-|E|) / (1 - lam^2 z'(X_E'X_E)^{-1}z) )``,
    which equals ``lam * ||y - X beta||_2`` at the solution. Solving the
    quadratic LASSO at this penalty gives back ``fit.beta`` exactly on the
    selection event.
    """
    z = fit.model.signs.astype(float)
    denom = 1.0 - fit.lam**2 * float(z @ proj.gram_inv @ z)
    if denom <= 0:
        raise DegenerateScaling(
            f"1 - lam^2 z'(X_E'X_E)^{{-1}}z = {denom:.3e} is not positive"
        )
    return fit.lam * np.sqrt(sigma2_ols * proj.df / denom)
