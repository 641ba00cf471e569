import numpy as np
import pytest

from selinf.model import RegressionData
from selinf.simulate import equicorrelated_design
from selinf.solver import fit_sqrt_lasso


def make_instance(rng, n, p, rho, k_signal=3, amplitude=4.0, sigma=1.0,
                  random_signs=False):
    """Random regression instance with unit-norm equicorrelated columns."""
    X = equicorrelated_design(rng, n, p, rho)
    beta = np.zeros(p)
    if k_signal:
        signs = rng.choice((-1.0, 1.0), size=k_signal) if random_signs else 1.0
        beta[:k_signal] = amplitude * sigma * signs
    y = X @ beta + sigma * rng.standard_normal(n)
    return RegressionData(y=y, X=X, normalized=True), beta


@pytest.fixture(scope="session", autouse=True)
def warm_solver():
    # trigger the JIT compile once so timed tests measure the solver only
    rng = np.random.default_rng(0)
    data, _ = make_instance(rng, 25, 10, 0.0)
    fit_sqrt_lasso(data, 0.5)
