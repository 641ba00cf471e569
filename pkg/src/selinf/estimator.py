"""Scikit-learn style front end.

``SqrtLasso`` exposes the solver through the familiar
fit/predict/get_params surface so it composes with pipelines, and keeps a
handle on the training data so that post-selection inference is one method
call away from a fitted estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .inference import SelectiveReport, selective_report
from .model import RegressionData, build_projection
from .solver import TuningSpec, choose_lambda, fit_sqrt_lasso


class SqrtLasso(RegressorMixin, BaseEstimator):
    """Square-root LASSO with a scale-free penalty rule.

    Parameters
    ----------
    kappa : float, default=0.8
        Multiplier of the Monte-Carlo penalty rule; ignored when ``lam``
        is given.
    lam : float or None, default=None
        Explicit penalty level; None means use the rule.
    mc_draws : int, default=1000
        Monte-Carlo draws for the penalty rule.
    tol : float, default=1e-8
        KKT tolerance of the solver.
    max_sweeps : int, default=50000
        Coordinate-sweep budget.
    random_state : int, default=0
        Seed of the penalty rule.

    Attributes
    ----------
    coef_ : (p,) fitted coefficients
    active_ : (k,) indices of the selected columns
    signs_ : (k,) signs of the selected coefficients
    subgradient_ : (p,) l1 subgradient at the solution
    lambda_ : penalty level actually used
    residual_norm_, kkt_residual_ : solver certificates
    """

    def __init__(self, kappa=0.8, lam=None, mc_draws=1000, tol=1e-8,
                 max_sweeps=50_000, random_state=0):
        self.kappa = kappa
        self.lam = lam
        self.mc_draws = mc_draws
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        data = RegressionData(y=y, X=X)
        if self.lam is not None:
            lam = float(self.lam)
        else:
            lam = choose_lambda(
                X,
                TuningSpec(kappa=self.kappa, mc_draws=self.mc_draws,
                           seed=self.random_state),
            )
        fit = fit_sqrt_lasso(data, lam, tol=self.tol, max_sweeps=self.max_sweeps)
        self.n_features_in_ = data.p
        self.coef_ = np.asarray(fit.beta)
        self.active_ = np.asarray(fit.model.active)
        self.signs_ = np.asarray(fit.model.signs)
        self.subgradient_ = np.asarray(fit.subgrad)
        self.lambda_ = fit.lam
        self.residual_norm_ = fit.residual_norm
        self.kkt_residual_ = fit.kkt_residual
        self._data = data
        self._fit = fit
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_

    def selective_inference(self, level=0.9, sigma="plr", exact=False) -> SelectiveReport:
        """Selective p-values, intervals and variance estimates for the fit."""
        check_is_fitted(self, "coef_")
        proj = build_projection(self._data, self._fit.model)
        kappa = self.kappa if self.lam is None else None
        return selective_report(
            self._data, self._fit, proj=proj, level=level, sigma=sigma,
            exact=exact, kappa=kappa,
        )
