"""Selective inference after square-root LASSO selection with unknown noise.

The square-root LASSO penalizes the residual norm rather than its square,
which makes a good penalty level independent of the noise scale. After
fitting, the set of responses that would reproduce the observed active set
and signs is an explicit system of inequalities, and conditioning on it
yields exact truncated Student-T tests for the selected coefficients,
truncated-Gaussian confidence intervals with a plug-in variance, a
pseudo-likelihood estimate of the noise level, and residual-direction
goodness-of-fit diagnostics.
"""

__version__ = "0.1.0"

from .errors import (
    AcceptanceTooLow,
    BracketFailure,
    DegenerateScaling,
    EmptyTruncation,
    InfeasibleObserved,
    InterpolationDegenerate,
    NonConvergence,
    NoRoot,
    NumericalError,
    RankDeficient,
    SelectiveInferenceError,
    ValidationError,
    ZeroResidual,
    ZeroResidualDf,
)
from .estimator import SqrtLasso
from .events import (
    ActiveGeometry,
    InactiveGeometry,
    QuasiAffineEvent,
    ancillary_direction,
    build_event,
)
from .inference import (
    SelectiveReport,
    TestSpec,
    exact_t_interval,
    gaussian_approx_interval,
    gaussian_approx_pvalue,
    selective_pvalue,
    selective_report,
    sigma2_pseudolik,
    sigma2_pseudolik_regularized,
)
from .model import (
    ProjectionPair,
    RegressionData,
    SelectedModel,
    build_projection,
    load_csv,
    ols_sigma2,
    with_normalized_columns,
)
from .diagnostics import AncillarySampler, make_sampler, sample_ancillary, selective_f_test
from .simulate import (
    PRESETS,
    BhqResult,
    SimScenario,
    bhq,
    run_coverage_sim,
    run_fdr_sim,
    run_sigma_sim,
    run_simulation,
)
from .solver import (
    SqrtLassoFit,
    TuningSpec,
    check_kkt,
    choose_lambda,
    fit_sqrt_lasso,
    lasso_equivalent_gamma,
    solve_lasso,
)
from .truncated import (
    IntervalUnion,
    TruncatedChi2Scaled,
    TruncatedT,
    solve_slice,
    trunc_chi2_mean,
    trunc_t_cdf,
    trunc_t_quantile,
)

__all__ = [name for name in dir() if not name.startswith("_")]
