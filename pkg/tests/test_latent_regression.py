"""
核岭回归测试
"""
import numpy as np
import pytest

from exceptions import ValidationError
from latent_regression import default_rbf_shape, imq_kernel, krr_fit, krr_predict

TS = np.array([0.0, 0.2, 0.35, 0.6, 0.8, 1.0])


def _targets(ts):
    return np.column_stack([np.sin(3 * ts), ts ** 2])


def test_single_point_reproduced():
    model = krr_fit([0.3], [[2.0, -1.0]])
    np.testing.assert_allclose(krr_predict(model, [0.3]), [[2.0, -1.0]], rtol=1e-9)


def test_interpolation_limit():
    Y = _targets(TS)
    model = krr_fit(TS, Y, ridge=1e-12)
    np.testing.assert_allclose(krr_predict(model, TS), Y, atol=1e-6)


def test_constant_targets():
    ts = np.linspace(0.0, 0.5, 8)
    model = krr_fit(ts, np.full(8, 3.0))
    query = np.linspace(0.0, 0.5, 57)
    np.testing.assert_allclose(krr_predict(model, query)[:, 0], 3.0, atol=1e-3)


def test_permutation_invariance():
    Y = _targets(TS)
    query = np.linspace(0.05, 0.95, 11)
    base = krr_predict(krr_fit(TS, Y, ridge=1e-3), query)
    perm = np.array([3, 0, 5, 1, 4, 2])
    permuted = krr_predict(krr_fit(TS[perm], Y[perm], ridge=1e-3), query)
    np.testing.assert_allclose(permuted, base, atol=1e-12)


def test_ridge_monotonicity():
    Y = _targets(TS)
    residuals = [np.linalg.norm(krr_predict(krr_fit(TS, Y, ridge=r), TS) - Y)
                 for r in (1e-8, 1e-4, 1e-2, 1.0)]
    assert np.all(np.diff(residuals) >= 0)


def test_gram_positive_definite():
    G = imq_kernel(TS, TS, default_rbf_shape(TS))
    np.testing.assert_allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0


def test_default_shape():
    assert default_rbf_shape([0.0, 0.5]) == pytest.approx(4.0)
    assert default_rbf_shape([0.2]) == 1.0


def test_duplicate_centers_rejected():
    with pytest.raises(ValidationError):
        krr_fit([0.1, 0.1, 0.2], [1.0, 2.0, 3.0])


def test_shape_mismatch_rejected():
    with pytest.raises(ValidationError):
        krr_fit([0.1, 0.2], [1.0, 2.0, 3.0])


def test_extrapolation_warns(capsys):
    model = krr_fit(TS, _targets(TS))
    krr_predict(model, [1.5])
    assert "[警告]" in capsys.readouterr().out
