import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from piid import linalg
from piid.errors import NotPositiveDefinite


def _spd(rng, p):
    a = rng.standard_normal((p, p))
    return a @ a.T + 0.1 * np.eye(p)


def test_cholesky_matches_numpy(rng):
    a = _spd(rng, 6)
    np.testing.assert_allclose(linalg.cholesky(a), np.linalg.cholesky(a), atol=1e-12)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky(np.diag([1.0, -1.0]))


def test_sym_eigen_matches_numpy(rng):
    a = _spd(rng, 8)
    lam, vec = linalg.sym_eigen(a)
    np.testing.assert_allclose(np.sort(lam), np.linalg.eigvalsh(a), rtol=1e-10)
    np.testing.assert_allclose(vec @ np.diag(lam) @ vec.T, a, atol=1e-10)
    np.testing.assert_allclose(vec.T @ vec, np.eye(8), atol=1e-10)


def test_inverse_and_inv_sqrt(rng):
    a = _spd(rng, 5)
    np.testing.assert_allclose(linalg.inverse(a) @ a, np.eye(5), atol=1e-9)
    s = linalg.inv_sqrt(a)
    np.testing.assert_allclose(s @ a @ s, np.eye(5), atol=1e-9)


def test_pseudo_inverse_of_singular(rng):
    b = rng.standard_normal((6, 3))
    a = b @ b.T
    np.testing.assert_allclose(linalg.pseudo_inverse(a), np.linalg.pinv(a, rcond=1e-10), atol=1e-8)
    lam, vr, vnull = linalg.psd_decompose(a)
    assert lam.size == 3 and vnull.shape == (6, 3)
    np.testing.assert_allclose(a @ vnull, 0.0, atol=1e-9)


def test_psd_factor_reproduces(rng):
    b = rng.standard_normal((5, 2))
    a = b @ b.T
    f = linalg.psd_factor(a)
    np.testing.assert_allclose(f @ f.T, a, atol=1e-10)


@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
def test_eigen_reconstructs_any_symmetric(m):
    a = m + m.T
    lam, vec = linalg.sym_eigen(a)
    np.testing.assert_allclose(vec @ np.diag(lam) @ vec.T, a, atol=1e-9)
