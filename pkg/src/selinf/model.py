"""Core regression types and dense projection helpers.

Everything downstream works with three immutable objects: the data
(response plus design), the selected model (active set and signs), and the
projection bundle for the active columns (projector, pseudo-inverse and
inverse Gram). Projections are computed from an SVD, never by inverting
the Gram matrix directly, which keeps the error bounded on correlated
designs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, ValidationError, ZeroResidualDf

# Relative singular-value cutoff below which selected columns are treated
# as rank deficient.
RANK_RTOL = 1e-10


def _frozen(a, dtype=float):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RegressionData:
    """Response vector and design matrix.

    Parameters
    ----------
    y : ndarray, shape (n,)
        Response, in arbitrary units.
    X : ndarray, shape (n, p)
        Design matrix.
    column_names : sequence of str, optional
        Labels for the p columns.
    normalized : bool
        Set when the columns are known to have unit Euclidean norm; the
        constructor verifies the claim.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple | None = None
    normalized: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1 or X.ndim != 2:
            raise ValidationError("y must be 1-d and X 2-d")
        n, p = X.shape
        if y.shape[0] != n:
            raise ValidationError(f"y has length {y.shape[0]}, X has {n} rows")
        if n < 2 or p < 1:
            raise ValidationError("need n >= 2 and p >= 1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise ValidationError("NaN or Inf in input data")
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != p:
                raise ValidationError("column_names length must equal p")
            object.__setattr__(self, "column_names", names)
        if self.normalized:
            norms = np.linalg.norm(X, axis=0)
            if np.abs(norms - 1.0).max() > 1e-8:
                raise ValidationError("normalized flag set but columns are not unit norm")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SelectedModel:
    """Active set and sign vector of a selected model.

    ``active`` holds strictly increasing column indices; ``signs`` holds
    the corresponding entries in {-1, +1}.
    """

    active: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        active = np.asarray(self.active, dtype=np.int64)
        signs = np.asarray(self.signs, dtype=np.int64)
        if active.ndim != 1 or signs.ndim != 1 or active.shape != signs.shape:
            raise ValidationError("active and signs must be 1-d of equal length")
        if active.size and np.any(np.diff(active) <= 0):
            raise ValidationError("active indices must be strictly increasing")
        if active.size and np.any(active < 0):
            raise ValidationError("active indices must be nonnegative")
        if not np.all(np.isin(signs, (-1, 1))):
            raise ValidationError("signs must be -1 or +1")
        object.__setattr__(self, "active", _frozen(active, dtype=np.int64))
        object.__setattr__(self, "signs", _frozen(signs, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.active.size


@dataclass(frozen=True)
class ProjectionPair:
    """Projection bundle for the active columns X_E.

    Fields
    ------
    P : (n, n) orthogonal projector onto col(X_E)
    pinv : (|E|, n) pseudo-inverse X_E^+ = (X_E'X_E)^{-1} X_E'
    gram_inv : (|E|, |E|) inverse Gram matrix (X_E'X_E)^{-1}
    """

    P: np.ndarray
    pinv: np.ndarray
    gram_inv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P))
        object.__setattr__(self, "pinv", _frozen(self.pinv))
        object.__setattr__(self, "gram_inv", _frozen(self.gram_inv))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def rank(self) -> int:
        return self.pinv.shape[0]

    @property
    def df(self) -> int:
        """Residual degrees of freedom n - |E|."""
        return self.n - self.rank


def build_projection(data: RegressionData, model: SelectedModel) -> ProjectionPair:
    """Build the projector, pseudo-inverse and inverse Gram for X_E.

    Uses an SVD of X_E; raises :class:`RankDeficient` if the smallest
    singular value is below ``RANK_RTOL`` times the largest (columns not in
    general position).
    """
    n = data.n
    k = model.size
    if k == 0:
        return ProjectionPair(
            P=np.zeros((n, n)), pinv=np.zeros((0, n)), gram_inv=np.zeros((0, 0))
        )
    if model.active[-1] >= data.p:
        raise ValidationError("active index exceeds number of columns")
    if k >= n:
        raise ValidationError("selected model must satisfy |E| < n")
    XE = data.X[:, model.active]
    U, s, Vt = np.linalg.svd(XE, full_matrices=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"smallest singular value {s[-1]:.3e} below {RANK_RTOL:g} * {s[0]:.3e}"
        )
    P = U @ U.T
    pinv = (Vt.T / s) @ U.T
    gram_inv = (Vt.T / s**2) @ Vt
    return ProjectionPair(P=P, pinv=pinv, gram_inv=gram_inv)


def ols_sigma2(data: RegressionData, proj: ProjectionPair) -> float:
    """Residual mean square ||(I - P)y||^2 / (n - |E|) of the selected model."""
    df = proj.df
    if df < 1:
        raise ZeroResidualDf("no residual degrees of freedom (n == |E|)")
    r = data.y - proj.P @ data.y
    return float(r @ r) / df


def load_csv(path, response: str) -> RegressionData:
    """Read a headed CSV file into :class:`RegressionData`.

    The column named ``response`` becomes y; every other column must be
    numeric and forms X in file order. Non-numeric cells are rejected.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise ValidationError(f"{path}: no column named {response!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} cells")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in column {name!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    ridx = header.index(response)
    keep = [i for i in range(len(header)) if i != ridx]
    return RegressionData(
        y=arr[:, ridx],
        X=arr[:, keep],
        column_names=tuple(header[i] for i in keep),
    )


def with_normalized_columns(data: RegressionData) -> RegressionData:
    """Return a copy of ``data`` with columns rescaled to unit norm."""
    norms = np.linalg.norm(data.X, axis=0)
    if np.any(norms == 0):
        raise ValidationError("cannot normalize a zero column")
    return RegressionData(
        y=data.y, X=data.X / norms, column_names=data.column_names, normalized=True
    )
