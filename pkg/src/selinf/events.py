"""Explicit description of the selection event.

Fixing the active set E and sign vector z_E, the set of responses for
which the square-root LASSO reproduces exactly that (E, z_E) splits into
two groups of inequalities:

* sign constraints on the active coefficients, which depend on y only
  through the standardized single-coefficient statistics
  ``U_i(y) = e_i' X_E^+ y / ||e_i' X_E^+||`` and the residual scale
  estimate ``sigma_hat(y)``; they are stored in the canonical form
  ``C y <= sigma_hat(y) * b`` with unit-norm rows of C, and
* subgradient bound constraints on the inactive columns, which depend on
  y only through the unit residual direction ``(I-P)y / ||(I-P)y||``.

Both groups are invariant to positive rescaling of y. The active group in
canonical form is what truncates the coefficient pivots downstream; the
inactive group drops out of coefficient inference (it involves an
independent statistic) but drives the residual diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateScaling,
    InfeasibleObserved,
    ValidationError,
    ZeroResidual,
)
from .model import ProjectionPair, RegressionData, SelectedModel, _frozen
from .solver import SqrtLassoFit

# Componentwise slack allowed when checking that the observed response
# satisfies its own event (rows of C are unit norm).
FEASIBILITY_SLACK = 1e-8


@dataclass(frozen=True)
class QuasiAffineEvent:
    """Constraints ``C y <= sigma_hat_P(y) * b`` with C P = C.

    ``sigma_hat_P(y)^2 = ||(I-P)y||^2 / df`` is the residual mean square of
    the projector P; df = trace(I - P).
    """

    C: np.ndarray
    b: np.ndarray
    proj: ProjectionPair
    df: int

    def __post_init__(self):
        object.__setattr__(self, "C", _frozen(self.C))
        object.__setattr__(self, "b", _frozen(self.b))
        if self.C.shape[0] != self.b.shape[0]:
            raise ValidationError("C and b must have matching row counts")
        if self.df < 1:
            raise ValidationError("df must be at least 1")

    def sigma_hat(self, y) -> float:
        """Residual scale estimate sigma_hat_P(y) of a response vector."""
        r = y - self.proj.P @ y
        return float(np.sqrt((r @ r) / self.df))

    def contains(self, y, slack: float = FEASIBILITY_SLACK) -> bool:
        """Whether y satisfies the active constraints."""
        return bool(np.all(self.C @ y <= self.sigma_hat(y) * self.b + slack))


@dataclass(frozen=True)
class ActiveGeometry:
    """Unit directions and constants of the sign constraints.

    ``eta_rows[i]`` is the unit vector ``e_i' X_E^+ / ||e_i' X_E^+||`` and
    ``alpha[i]`` the constant such that the i-th sign constraint reads
    ``sigma_hat(y) * alpha[i] - z_i * eta_rows[i] @ y <= 0``.
    """

    eta_rows: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta_rows", _frozen(self.eta_rows))
        object.__setattr__(self, "alpha", _frozen(self.alpha))
        norms = np.linalg.norm(self.eta_rows, axis=1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-10:
            raise ValidationError("eta rows must be unit norm")


@dataclass(frozen=True)
class InactiveGeometry:
    """Two-sided bounds on the inactive columns' residual correlations.

    For each inactive column i the event requires
    ``offset_lower[i] < lhs_scale * rows[i] @ y / ||(I-P)y|| < offset_upper[i]``
    where ``rows[i] = X_i'(I-P)``.
    """

    lhs_scale: float
    rows: np.ndarray
    offset_upper: np.ndarray
    offset_lower: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))
        object.__setattr__(self, "offset_upper", _frozen(self.offset_upper))
        object.__setattr__(self, "offset_lower", _frozen(self.offset_lower))
        if self.lhs_scale <= 0:
            raise ValidationError("lhs_scale must be positive")

    def contains_direction(self, u) -> bool:
        """Whether a unit residual direction satisfies the bounds."""
        s = self.lhs_scale * (self.rows @ u)
        return bool(np.all(s < self.offset_upper) and np.all(s > self.offset_lower))


def build_event(
    fit: SqrtLassoFit, data: RegressionData, proj: ProjectionPair
) -> tuple[QuasiAffineEvent, ActiveGeometry, InactiveGeometry]:
    """Convert a converged fit into its explicit selection event.

    The i-th sign constraint is derived from the closed form of the active
    coefficients: with G = X_E'X_E and c(y) the residual norm,

        beta_i(y) = e_i' G^{-1} (X_E'y - lam c(y) z_E),

    so ``z_i beta_i(y) > 0`` becomes, after standardizing by
    ``||e_i' X_E^+||`` and expressing c(y) through sigma_hat(y),

        z_i U_i(y) >= sigma_hat(y) * alpha_i,
        alpha_i = lam sqrt(df) (1 - lam^2 z'G^{-1}z)^{-1/2}
                  * z_i (G^{-1}z)_i / ||e_i' X_E^+||.

    Row i of C is ``-z_i e_i' X_E^+ / ||e_i' X_E^+||`` and ``b_i = -alpha_i``.
    The inactive bounds come from requiring the implied subgradient of each
    inactive column to stay inside (-1, 1).

    Raises :class:`InfeasibleObserved` if the observed response violates
    its own event beyond a small slack, which would indicate a solver or
    construction bug.
    """
    model = fit.model
    k = model.size
    if k < 1:
        raise ValidationError("event construction requires a nonempty active set")
    n, p = data.n, data.p
    df = n - k
    z = model.signs.astype(float)
    gram_inv_z = proj.gram_inv @ z
    denom = 1.0 - fit.lam**2 * float(z @ gram_inv_z)
    if denom <= 0:
        raise DegenerateScaling(
            f"1 - lam^2 z'(X_E'X_E)^{{-1}}z = {denom:.3e} is not positive"
        )

    row_norms = np.linalg.norm(proj.pinv, axis=1)
    eta_rows = proj.pinv / row_norms[:, None]
    alpha = fit.lam * np.sqrt(df / denom) * z * gram_inv_z / row_norms
    C = -z[:, None] * eta_rows
    b = -alpha
    event = QuasiAffineEvent(C=C, b=b, proj=proj, df=df)

    inactive_idx = np.setdiff1d(np.arange(p), model.active)
    X_in = data.X[:, inactive_idx]
    rows = X_in.T - (X_in.T @ proj.P)
    v = X_in.T @ (data.X[:, model.active] @ gram_inv_z)
    inactive = InactiveGeometry(
        lhs_scale=float(np.sqrt(denom) / fit.lam),
        rows=rows,
        offset_upper=1.0 - v,
        offset_lower=-1.0 - v,
    )

    y = data.y
    viol = float((event.C @ y - event.sigma_hat(y) * event.b).max(initial=-np.inf))
    if viol > FEASIBILITY_SLACK:
        raise InfeasibleObserved(
            f"observed response violates its own event by {viol:.3e}"
        )
    return event, ActiveGeometry(eta_rows=eta_rows, alpha=alpha), inactive


def ancillary_direction(data: RegressionData, proj: ProjectionPair) -> np.ndarray:
    """Unit residual direction ``(I-P)y / ||(I-P)y||``."""
    r = data.y - proj.P @ data.y
    nrm = float(np.linalg.norm(r))
    if nrm <= 1e-12 * max(1.0, float(np.linalg.norm(data.y))):
        raise ZeroResidual("response lies in the span of the selected columns")
    return r / nrm


def event_in_full(
    event: QuasiAffineEvent, inactive: InactiveGeometry, y
) -> bool:
    """Whether y satisfies both the active and inactive constraints."""
    if not event.contains(y):
        return False
    resid = y - event.proj.P @ y
    nrm = float(np.linalg.norm(resid))
    if nrm == 0.0:
        return False
    return inactive.contains_direction(resid / nrm)


def event_to_json(
    event: QuasiAffineEvent, geom: ActiveGeometry, model: SelectedModel
) -> str:
    """Serialize the event for reproducibility archives."""
    payload = {
        "schema": "selinf/v1",
        "C": event.C.tolist(),
        "b": event.b.tolist(),
        "df": int(event.df),
        "alpha": geom.alpha.tolist(),
        "active": model.active.tolist(),
        "signs": model.signs.tolist(),
    }
    return json.dumps(payload)
