import numpy as np
import pytest
from scipy import stats

from piid.errors import ConfigError, IoError, ZeroVariance
from piid.moments import (Dataset, SConstraint, SampleMoments, Shape, box_kappa, build_s, chi2_quantile,
                          compute_moments, read_csv)


def test_hand_moments():
    m = compute_moments(np.array([[0.0, 0.0], [2.0, 2.0]]))
    np.testing.assert_array_equal(m.xbar, [1.0, 1.0])
    np.testing.assert_array_equal(m.sigma_hat, [[1.0, 1.0], [1.0, 1.0]])


def test_identical_rows_zero_sigma():
    with pytest.warns(Warning):
        m = compute_moments(np.ones((5, 3)))
    np.testing.assert_array_equal(m.sigma_hat, 0.0)


def test_sigma_uses_divisor_n(rng):
    x = rng.standard_normal((50, 3))
    m = compute_moments(x)
    np.testing.assert_allclose(m.sigma_hat, np.cov(x.T, bias=True), atol=1e-12)


def test_normal_sample_sigma_near_identity(rng):
    m = compute_moments(rng.standard_normal((1000, 2)))
    assert np.max(np.abs(m.sigma_hat - np.eye(2))) < 0.15


def test_box_kappa_one_dim():
    m = SampleMoments(np.zeros(1), np.eye(1), 100)
    assert 1.94 <= box_kappa(m, 0.05, 200000, 1) <= 1.98
    assert box_kappa(m, 0.5, 200000, 1) == pytest.approx(stats.norm.ppf(0.75), abs=0.01)


def test_box_kappa_perfect_correlation_collapses():
    m1 = SampleMoments(np.zeros(1), np.eye(1), 100)
    m2 = SampleMoments(np.zeros(2), np.ones((2, 2)), 100)
    assert box_kappa(m2, 0.05, 200000, 3) == pytest.approx(box_kappa(m1, 0.05, 200000, 3), abs=0.02)


def test_box_kappa_validation():
    m = SampleMoments(np.zeros(2), np.diag([1.0, 0.0]), 10)
    with pytest.raises(ZeroVariance):
        box_kappa(m, 0.05)
    with pytest.raises(ConfigError):
        box_kappa(SampleMoments(np.zeros(1), np.eye(1), 10), 1.5)


def test_chi2_quantile_wrapper():
    assert chi2_quantile(1, 0.95) == pytest.approx(3.841458820694124, abs=1e-9)


def test_box_substitution():
    m = SampleMoments(np.zeros(1), np.eye(1), 100)
    s = build_s(m, "box", 0.05, n_sims=200000, seed=0)
    assert s.hi[0] == pytest.approx(s.kappa / 10.0)
    assert 0.194 <= s.hi[0] <= 0.198


def test_ellipsoid_is_chi2_ball(rng):
    x = rng.standard_normal((400, 3)) @ np.array([[1.0, 0.3, 0.0], [0.0, 1.0, 0.2], [0.0, 0.0, 1.0]])
    m = compute_moments(x)
    s = build_s(m, "ellipsoid", 0.05)
    assert s.kappa == pytest.approx(stats.chi2.ppf(0.95, 3), rel=1e-9)
    inv = np.linalg.inv(m.sigma_hat)
    for _ in range(200):
        pt = m.xbar + rng.standard_normal(3) * 0.15
        inside = m.n * (pt - m.xbar) @ inv @ (pt - m.xbar) <= s.kappa
        if abs(m.n * (pt - m.xbar) @ inv @ (pt - m.xbar) - s.kappa) > 1e-6:
            assert s.contains(pt) == inside
    # the bounding box is tight: each face touches the ellipsoid
    h = np.sqrt(s.kappa * np.diag(m.sigma_hat) / m.n)
    np.testing.assert_allclose(s.hi - m.xbar, h)


def test_singular_sigma_uses_rank():
    rng = np.random.Generator(np.random.Philox(4))
    z = rng.integers(0, 3, 300)
    x = (z[:, None] == np.arange(3)).astype(float)
    m = compute_moments(x)
    s = build_s(m, "ellipsoid", 0.05)
    assert s.info["rank"] == 2
    assert s.kappa == pytest.approx(stats.chi2.ppf(0.95, 2), rel=1e-9)
    assert s.contains(m.xbar)
    assert not s.contains(m.xbar + np.array([0.01, 0.0, 0.0]))


def test_sconstraint_validation():
    with pytest.raises(ConfigError):
        SConstraint("box", np.zeros(2), np.ones(2), np.zeros(2), kappa=1.0)
    with pytest.raises(ConfigError):
        Shape.parse("sphere")


def test_read_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,4\n\n5,6\n")
    d = read_csv(p)
    assert d.n == 3 and d.p == 2
    p.write_text("1,2\n3,x\n")
    with pytest.raises(IoError):
        read_csv(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(IoError):
        read_csv(p)
    with pytest.raises(IoError):
        read_csv(tmp_path / "missing.csv")


def test_dataset_rejects_nonfinite():
    with pytest.raises(ConfigError):
        Dataset(np.array([[1.0], [np.nan]]))
