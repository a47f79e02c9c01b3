import math

import numpy as np
import pytest
from scipy import integrate, stats

from piid import experiments as ex
from piid.errors import ConfigError, EmptyGroup
from piid.moments import compute_moments


def test_normal_identified_set_closed_form():
    lo, hi = ex.true_identified_set("normal")
    assert hi == 1 + 1 / math.sqrt(2 * math.pi)
    assert lo == -hi
    assert round(hi, 4) == 1.3989


def test_t3_identified_set_quadrature():
    _, hi = ex.true_identified_set("t(3)")
    # E[V+] for t with 3 dof is sqrt(3)/pi
    assert hi == pytest.approx(1 + math.sqrt(3) / math.pi, abs=1e-10)
    ref, _ = integrate.quad(lambda v: v * stats.t.pdf(v, 3), 0, np.inf)
    assert hi - 1 == pytest.approx(ref, abs=1e-8)


def test_monotone_rows_hold_at_truth():
    truth = np.array([0.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
    assert np.all(ex.MONOTONE @ truth <= 0)


def test_population_moments_feasible_at_truth():
    spec = ex.build_mc_spec()
    mu = ex.population_moments("normal")
    lo, hi = ex.true_identified_set("normal")
    for h0 in (lo, 0.0, hi):
        psi = np.array([h0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        psi[3] = min(psi[3], h0)
        psi[4] = max(psi[4], h0)
        assert spec.is_feasible(psi, mu, tol=1e-12)


def test_zero_noise_override():
    d = ex.McDesign(n=300)
    x = ex.generate_sample(d, 0, v_override=0.0).rows
    np.testing.assert_array_equal(x[:, :6], x[:, 6:12])


def test_group_balance_large_n():
    x = ex.generate_sample(ex.McDesign(n=6000), 2).rows
    counts = x[:, 12:].sum(axis=0)
    assert np.all(counts > 0)
    np.testing.assert_allclose(x[:, 12:].mean(axis=0), 1 / 6, atol=0.02)


def test_sample_deterministic_per_rep():
    d = ex.McDesign(n=200, seed=5)
    a = ex.generate_sample(d, 3).rows
    b = ex.generate_sample(d, 3).rows
    c = ex.generate_sample(d, 4).rows
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_t3_draws_have_t_distribution():
    rng = ex._rng(0, 0)
    v = ex._draw_v(rng, 20000, ex.VDist.T3)
    assert stats.kstest(v, stats.t(3).cdf).pvalue > 0.001


def test_empty_group_resample_then_error(monkeypatch):
    calls = []

    def fake(design, rng, v_override=None):
        calls.append(1)
        counts = np.array([0, 1, 1, 1, 1, 1])
        return np.ones((design.n, 18)), counts

    monkeypatch.setattr(ex, "_sample_once", fake)
    with pytest.raises(EmptyGroup):
        ex.generate_sample(ex.McDesign(n=60), 0)
    assert len(calls) == 2


def test_design_validation():
    with pytest.raises(ConfigError):
        ex.McDesign(n=10)
    with pytest.raises(ConfigError):
        ex.McDesign(mode="sideways")
    with pytest.raises(ConfigError):
        ex.McDesign(v_dist="cauchy")
    assert ex.Mode.parse("fixing") is ex.Mode.FIXED


def test_build_problem_dimensions():
    m = compute_moments(ex.generate_sample(ex.McDesign(n=300), 0))
    prob = ex.build_mc_problem(m, "box")
    assert prob.spec.psi_dim == 7 and prob.spec.mu_dim == 18
    assert prob.spec.mu2_indices == list(range(12, 18))
    assert len(prob.spec.constraints) == 12 + 6


def test_small_run_box(monkeypatch):
    monkeypatch.setenv("PIID_THREADS", "1")
    d = ex.McDesign(n=300, reps=3, K=4, G=50)
    rows = ex.run_mc_multi(d, [("outer", "box"), ("inner", "box"), ("fixed", "box")])
    outer, inner, fixed = rows
    assert outer.failures == inner.failures == 0
    for a, b in zip(outer.rep_details, inner.rep_details):
        assert a["lower"] <= b["lower"] + 1e-9 and b["upper"] <= a["upper"] + 1e-9
    assert 0.0 <= outer.coverage <= 1.0
    assert outer.to_dict(details=False)["mode"] == "outer"


def test_threads_do_not_change_results(monkeypatch):
    d = ex.McDesign(n=300, reps=4, K=3, G=30)
    monkeypatch.setenv("PIID_THREADS", "1")
    a = ex.run_mc(d)
    monkeypatch.setenv("PIID_THREADS", "3")
    b = ex.run_mc(d)
    assert a.to_dict() == b.to_dict()


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("PIID_THREADS", "many")
    with pytest.raises(ConfigError):
        ex.run_mc(ex.McDesign(n=300, reps=1, K=2))
