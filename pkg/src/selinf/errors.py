"""Exception hierarchy.

Two branches matter for the CLI exit codes: ``ValidationError`` (bad user
input or violated precondition, exit code 2) and ``NumericalError``
(well-posed input on which the numerics failed or degenerated, exit code 3).
"""


class SelectiveInferenceError(Exception):
    """Base class for all package errors."""


class ValidationError(SelectiveInferenceError):
    """Invalid input or violated precondition."""


class NumericalError(SelectiveInferenceError):
    """Numerical failure or degeneracy on well-formed input."""


class RankDeficient(NumericalError):
    """Selected columns are not in general position (near-singular Gram)."""


class ZeroResidualDf(ValidationError):
    """Residual degrees of freedom are zero (n equals the model size)."""


class InterpolationDegenerate(NumericalError):
    """Residual norm collapsed to ~0; the square-root objective is
    non-differentiable there (penalty too small for this data)."""


class NonConvergence(NumericalError):
    """Iteration budget exhausted before reaching tolerance."""


class DegenerateScaling(NumericalError):
    """1 - lam^2 * z'(X_E'X_E)^{-1}z is not positive, so the residual
    scaling relating the two penalized problems is undefined."""


class InfeasibleObserved(NumericalError):
    """The observed response violates its own selection event (solver or
    event-construction bug)."""


class ZeroResidual(NumericalError):
    """Response lies in the span of the selected columns."""


class EmptyTruncation(NumericalError):
    """Truncation set has no mass under the reference law."""


class NoRoot(NumericalError):
    """Root finder could not bracket a solution."""


class BracketFailure(NumericalError):
    """Confidence-interval endpoint search found no sign change within the
    allowed bracket."""


class AcceptanceTooLow(NumericalError):
    """Constrained sampler could not produce the requested draws within
    budget."""
