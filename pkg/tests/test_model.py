import numpy as np
import pytest

from selinf.errors import RankDeficient, ValidationError, ZeroResidualDf
from selinf.model import (
    ProjectionPair,
    RegressionData,
    SelectedModel,
    build_projection,
    load_csv,
    ols_sigma2,
    with_normalized_columns,
)


def test_rank_one_projector_is_diagonal():
    X = np.zeros((3, 1))
    X[0, 0] = 1.0
    data = RegressionData(y=np.array([1.0, 2.0, 3.0]), X=X)
    proj = build_projection(data, SelectedModel(active=[0], signs=[1]))
    np.testing.assert_allclose(proj.P, np.diag([1.0, 0.0, 0.0]), atol=1e-12)


def test_orthonormal_columns_give_identity_gram():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 2)))
    data = RegressionData(y=rng.standard_normal(8), X=Q)
    proj = build_projection(data, SelectedModel(active=[0, 1], signs=[1, -1]))
    np.testing.assert_allclose(proj.P, Q @ Q.T, atol=1e-12)
    np.testing.assert_allclose(proj.gram_inv, np.eye(2), atol=1e-12)


def test_projector_against_qr_oracle():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((10, 3))
    data = RegressionData(y=rng.standard_normal(10), X=X)
    proj = build_projection(data, SelectedModel(active=[0, 1, 2], signs=[1, 1, 1]))
    # independent construction of the same projector
    Q, _ = np.linalg.qr(X)
    np.testing.assert_allclose(proj.P, Q @ Q.T, atol=1e-10)
    np.testing.assert_allclose(proj.P @ proj.P, proj.P, atol=1e-8)
    assert abs(np.trace(proj.P) - 3.0) <= 1e-8
    np.testing.assert_allclose(proj.P, X @ proj.pinv, atol=1e-8)


def test_rank_deficient_raises():
    X = np.ones((6, 2))
    data = RegressionData(y=np.zeros(6) + 1.0, X=X)
    with pytest.raises(RankDeficient):
        build_projection(data, SelectedModel(active=[0, 1], signs=[1, 1]))


def test_column_reordering_permutes_projection():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((12, 4))
    data = RegressionData(y=rng.standard_normal(12), X=X)
    a = build_projection(data, SelectedModel(active=[0, 2], signs=[1, 1]))
    # same columns through a permuted design: projector must be identical
    X2 = X[:, [2, 0, 1, 3]]
    data2 = RegressionData(y=data.y, X=X2)
    b = build_projection(data2, SelectedModel(active=[0, 1], signs=[1, 1]))
    np.testing.assert_allclose(a.P, b.P, atol=1e-10)
    np.testing.assert_allclose(a.pinv, b.pinv[::-1], atol=1e-10)


def test_ols_sigma2_exact_fit_and_empty_model():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((9, 2))
    y_in_span = X @ np.array([1.5, -2.0])
    data = RegressionData(y=y_in_span, X=X)
    proj = build_projection(data, SelectedModel(active=[0, 1], signs=[1, -1]))
    assert ols_sigma2(data, proj) == pytest.approx(0.0, abs=1e-18)

    empty = build_projection(data, SelectedModel(active=[], signs=[]))
    assert ols_sigma2(data, empty) == pytest.approx(float(y_in_span @ y_in_span) / 9)


def test_ols_sigma2_matches_normal_equations_oracle():
    rng = np.random.default_rng(5)
    n, k = 100, 4
    X = rng.standard_normal((n, k))
    y = X @ rng.standard_normal(k) + rng.standard_normal(n)
    data = RegressionData(y=y, X=X)
    proj = build_projection(data, SelectedModel(active=list(range(k)), signs=[1] * k))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rss = float(np.sum((y - X @ coef) ** 2))
    assert ols_sigma2(data, proj) == pytest.approx(rss / (n - k), rel=1e-10)


def test_zero_residual_df():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((3, 5))
    data = RegressionData(y=rng.standard_normal(3), X=X)
    proj = ProjectionPair(P=np.eye(3), pinv=rng.standard_normal((3, 3)),
                          gram_inv=np.eye(3))
    with pytest.raises(ZeroResidualDf):
        ols_sigma2(data, proj)


def test_pythagoras_identity():
    rng = np.random.default_rng(7)
    for _ in range(5):
        X = rng.standard_normal((15, 6))
        y = rng.standard_normal(15)
        data = RegressionData(y=y, X=X)
        proj = build_projection(data, SelectedModel(active=[0, 2, 5], signs=[1, 1, -1]))
        fitted = proj.P @ y
        lhs = float(y @ y)
        rhs = float(fitted @ fitted) + float((y - fitted) @ (y - fitted))
        assert abs(lhs - rhs) <= 1e-8


def test_data_validation():
    with pytest.raises(ValidationError):
        RegressionData(y=np.array([1.0]), X=np.ones((1, 1)))
    with pytest.raises(ValidationError):
        RegressionData(y=np.array([1.0, np.nan]), X=np.ones((2, 1)))
    with pytest.raises(ValidationError):
        RegressionData(y=np.ones(2), X=np.ones((2, 1)) * 2.0, normalized=True)
    with pytest.raises(ValidationError):
        SelectedModel(active=[2, 1], signs=[1, 1])
    with pytest.raises(ValidationError):
        SelectedModel(active=[0], signs=[2])


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("resp,a,b\n1.0,2.0,3.0\n4.0,5.0,6.0\n")
    data = load_csv(path, "resp")
    np.testing.assert_allclose(data.y, [1.0, 4.0])
    np.testing.assert_allclose(data.X, [[2.0, 3.0], [5.0, 6.0]])
    assert data.column_names == ("a", "b")


def test_csv_rejects_bad_cells(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("resp,a\n1.0,oops\n")
    with pytest.raises(ValidationError, match="non-numeric"):
        load_csv(path, "resp")
    path.write_text("resp,a\n1.0\n")
    with pytest.raises(ValidationError, match="expected 2 cells"):
        load_csv(path, "resp")
    path.write_text("resp,a\n")
    with pytest.raises(ValidationError, match="no data rows"):
        load_csv(path, "resp")
    with pytest.raises(ValidationError, match="no column named"):
        load_csv(path, "missing")


def test_normalize_columns():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((20, 3)) * 5.0
    data = RegressionData(y=rng.standard_normal(20), X=X)
    normed = with_normalized_columns(data)
    np.testing.assert_allclose(np.linalg.norm(normed.X, axis=0), 1.0, atol=1e-12)
    assert normed.normalized


def test_types_are_immutable():
    rng = np.random.default_rng(9)
    data = RegressionData(y=rng.standard_normal(5), X=rng.standard_normal((5, 2)))
    with pytest.raises(ValueError):
        data.X[0, 0] = 7.0
