"""Residual-direction diagnostics.

The unit residual direction ``u = (I-P)y / ||(I-P)y||`` carries no
information about the selected-model parameters: its null law is the
uniform distribution on the unit sphere of the residual subspace,
truncated by the inactive-column constraints of the selection event.
Sampling that law gives reference distributions for goodness-of-fit
statistics; the one implemented here is the usual F statistic for adding
a disjoint group of columns, which is a function of u alone.

Sampling is by rejection (Gaussian in the residual subspace, normalize,
keep the draws satisfying the constraints) with an automatic fallback to
a geodesic hit-and-run walk on the constrained sphere slice when the
acceptance rate is too small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AcceptanceTooLow, RankDeficient, ValidationError
from .events import InactiveGeometry
from .model import ProjectionPair, RegressionData, SelectedModel, _frozen

_FALLBACK_PROBE = 10_000   # proposals before the acceptance rate is judged
_FALLBACK_RATE = 1e-3
_THIN = 50                 # hit-and-run steps per retained draw


@dataclass(frozen=True)
class AncillarySampler:
    """Sampler for the null law of the unit residual direction.

    ``u_observed`` must satisfy the constraints; it seeds the hit-and-run
    walk. ``method`` is "rejection" (with automatic hit-and-run fallback)
    or "hit-and-run".
    """

    inactive: InactiveGeometry
    proj: ProjectionPair
    u_observed: np.ndarray
    seed: int = 0
    method: str = "rejection"
    max_rejections: int = 1_000_000

    def __post_init__(self):
        if self.method not in ("rejection", "hit-and-run"):
            raise ValidationError("method must be 'rejection' or 'hit-and-run'")
        if self.max_rejections < _FALLBACK_PROBE:
            raise ValidationError(f"max_rejections must be at least {_FALLBACK_PROBE}")
        object.__setattr__(self, "u_observed", _frozen(self.u_observed))
        u = self.u_observed
        if abs(np.linalg.norm(u) - 1.0) > 1e-8:
            raise ValidationError("u_observed must be unit norm")
        if np.linalg.norm(self.proj.P @ u) > 1e-8:
            raise ValidationError("u_observed must lie in the residual subspace")
        if self.inactive.rows.size and not self.inactive.contains_direction(u):
            raise ValidationError("u_observed violates the inactive constraints")


def _null_space_basis(proj: ProjectionPair) -> np.ndarray:
    """Orthonormal basis (n x d) of the residual subspace null(P)."""
    evals, evecs = np.linalg.eigh(proj.P)
    return evecs[:, evals < 0.5]


def _constraint_matrix(sampler: AncillarySampler, Q: np.ndarray):
    """Inactive constraints expressed in residual-subspace coordinates."""
    if sampler.inactive.rows.size == 0:
        return None
    M = sampler.inactive.lhs_scale * (sampler.inactive.rows @ Q)
    return M, sampler.inactive.offset_lower, sampler.inactive.offset_upper


def _feasible(M, lower, upper, V):
    """Rows of V (unit vectors in subspace coords) satisfying the bounds."""
    S = V @ M.T
    return np.all((S < upper) & (S > lower), axis=1)


def _hit_and_run(rng, v0, M, lower, upper, m, thin=_THIN):
    """Geodesic hit-and-run on the sphere slice {v : lower < M v < upper}.

    From the current point, a random great circle is drawn and the next
    point is sampled uniformly from the feasible arcs of that circle,
    which always contain the current point.
    """
    d = v0.size
    v = v0.copy()
    out = np.empty((m, d))
    for i in range(m * thin):
        for _ in range(50):
            g = rng.standard_normal(d)
            w = g - (g @ v) * v
            wn = np.linalg.norm(w)
            if wn > 1e-12:
                break
        else:
            raise AcceptanceTooLow("could not draw a tangent direction")
        w /= wn
        arcs = _feasible_arcs(M, lower, upper, v, w)
        if not arcs:
            raise AcceptanceTooLow("no feasible arc at the current point")
        lengths = np.array([b - a for a, b in arcs])
        pick = rng.uniform(0.0, lengths.sum())
        csum = np.cumsum(lengths)
        k = int(np.searchsorted(csum, pick))
        phi = arcs[k][0] + (pick - (csum[k] - lengths[k]))
        v = math.cos(phi) * v + math.sin(phi) * w
        v /= np.linalg.norm(v)
        if (i + 1) % thin == 0:
            out[(i + 1) // thin - 1] = v
    return out


def _feasible_arcs(M, lower, upper, v, w):
    """Feasible angle set of phi -> cos(phi) v + sin(phi) w on [0, 2pi)."""
    if M is None:
        return [(0.0, 2.0 * math.pi)]
    av = M @ v
    aw = M @ w
    R = np.hypot(av, aw)
    psi = np.arctan2(aw, av)
    two_pi = 2.0 * math.pi
    arcs = [(0.0, two_pi)]
    for Ri, psii, lo_i, hi_i in zip(R, psi, lower, upper):
        if Ri == 0.0:
            if not (lo_i < 0.0 < hi_i):
                return []
            continue
        pieces = _cos_band_arcs(lo_i / Ri, hi_i / Ri)
        if not pieces:
            return []
        shifted = []
        for a, b in pieces:
            length = b - a
            a = (a + psii) % two_pi
            b = a + length
            if b <= two_pi:
                shifted.append((a, b))
            else:
                shifted.append((a, two_pi))
                shifted.append((0.0, b - two_pi))
        arcs = _intersect_arcs(arcs, shifted)
        if not arcs:
            return []
    return arcs


def _cos_band_arcs(lo, hi):
    """{theta in [0, 2pi) : lo < cos(theta) < hi} as sorted intervals."""
    if lo >= hi or lo >= 1.0 or hi <= -1.0:
        return []
    two_pi = 2.0 * math.pi
    # cos(theta) < hi
    if hi >= 1.0:
        upper_set = [(0.0, two_pi)]
    else:
        a = math.acos(hi)
        upper_set = [(a, two_pi - a)]
    # cos(theta) > lo
    if lo <= -1.0:
        lower_set = [(0.0, two_pi)]
    else:
        b = math.acos(lo)
        lower_set = [(0.0, b), (two_pi - b, two_pi)]
    return _intersect_arcs(upper_set, lower_set)


def _intersect_arcs(A, B):
    out = []
    for a0, a1 in A:
        for b0, b1 in B:
            lo, hi = max(a0, b0), min(a1, b1)
            if lo < hi:
                out.append((lo, hi))
    out.sort()
    return out


def sample_ancillary(sampler: AncillarySampler, m: int) -> np.ndarray:
    """Draw m unit vectors from the constrained residual-direction law.

    Returns an (m, n) array. Rejection sampling is used first; if fewer
    than ``_FALLBACK_RATE`` of the first probe proposals are accepted (or
    the budget runs out), the sampler switches to geodesic hit-and-run
    started from an accepted point or from ``u_observed``.
    """
    if m < 1:
        raise ValidationError("m must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(sampler.seed))
    Q = _null_space_basis(sampler.proj)
    d = Q.shape[1]
    cons = _constraint_matrix(sampler, Q)

    collected = []
    n_collected = 0
    if sampler.method == "rejection":
        proposed = 0
        batch = max(1024, 2 * m)
        while n_collected < m and proposed < sampler.max_rejections:
            G = rng.standard_normal((batch, d))
            G /= np.linalg.norm(G, axis=1, keepdims=True)
            proposed += batch
            if cons is None:
                keep = G
            else:
                keep = G[_feasible(cons[0], cons[1], cons[2], G)]
            if keep.size:
                collected.append(keep)
                n_collected += keep.shape[0]
            if proposed >= _FALLBACK_PROBE and n_collected < _FALLBACK_RATE * proposed:
                break
        if n_collected >= m:
            V = np.concatenate(collected)[:m]
            return V @ Q.T

    # hit-and-run fallback (or forced method)
    if n_collected:
        v0 = np.concatenate(collected)[0]
    else:
        v0 = Q.T @ sampler.u_observed
        v0 /= np.linalg.norm(v0)
    if cons is None:
        M_ = None
        lower = upper = None
    else:
        M_, lower, upper = cons
    V = _hit_and_run(rng, v0, M_, lower, upper, m)
    return V @ Q.T


def selective_f_test(
    data: RegressionData,
    proj: ProjectionPair,
    model: SelectedModel,
    group,
    sampler: AncillarySampler,
    m: int = 2000,
) -> float:
    """Monte-Carlo F-test for adding a disjoint group of columns.

    Computes the usual F statistic for the group on top of the selected
    columns -- a function of the unit residual direction only -- and
    compares the observed value against ``m`` null draws of that
    direction. Returns the add-one-corrected tail probability
    ``(#{F >= F_obs} + 1) / (m + 1)``.
    """
    if m < 1:
        raise ValidationError("m must be at least 1")
    group = np.asarray(sorted(int(g) for g in group), dtype=np.int64)
    if group.size < 1:
        raise ValidationError("group must be nonempty")
    if np.intersect1d(group, model.active).size:
        raise ValidationError("group must be disjoint from the active set")
    if group.size and (group.min() < 0 or group.max() >= data.p):
        raise ValidationError("group index out of range")
    n_union = model.size + group.size
    if data.n - n_union < 1:
        raise ValidationError("no residual degrees of freedom for the grouped model")

    XG = data.X[:, group]
    XG_resid = XG - proj.P @ XG
    qr_Q, qr_R = np.linalg.qr(XG_resid)
    diag = np.abs(np.diag(qr_R))
    col_scale = float(np.linalg.norm(XG, axis=0).max())
    if diag.min() <= 1e-10 * max(col_scale, 1e-300):
        raise RankDeficient(
            "group columns add no independent residual direction; F undefined"
        )
    df_num = group.size
    df_den = data.n - n_union

    def f_stat(U):
        # U: (k, n) unit rows in null(P); split by the group subspace
        proj_norm2 = np.sum((U @ qr_Q) ** 2, axis=1)
        rest = np.sum(U**2, axis=1) - proj_norm2
        return (proj_norm2 / df_num) / (rest / df_den)

    f_obs = float(f_stat(sampler.u_observed[None, :])[0])
    draws = sample_ancillary(sampler, m)
    f_null = f_stat(draws)
    return float((np.count_nonzero(f_null >= f_obs) + 1) / (m + 1))


def max_residual_correlation(u: np.ndarray) -> float:
    """Summary statistic ||u||_inf of a unit residual direction."""
    return float(np.abs(u).max())


def make_sampler(
    data: RegressionData,
    proj: ProjectionPair,
    inactive: InactiveGeometry,
    seed: int = 0,
    method: str = "rejection",
    max_rejections: int = 1_000_000,
) -> AncillarySampler:
    """Build a sampler seeded at the observed residual direction."""
    from .events import ancillary_direction

    u = ancillary_direction(data, proj)
    return AncillarySampler(
        inactive=inactive, proj=proj, u_observed=u, seed=seed,
        method=method, max_rejections=max_rejections,
    )
