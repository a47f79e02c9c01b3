import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from piid.experiments import MONOTONE, McDesign, build_mc_problem, generate_sample
from piid.mccormick import (algorithm1, grid_mu2, inner_bounds, lift_point, outer_bounds, partition, relax)
from piid.moments import SConstraint, compute_moments
from piid.problem import Constraint, LinearExpr, ProblemSpec, SolvableProblem
from piid.errors import ConfigError, UnboundedBilinearRange
from piid.solver import violations


def rect(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return SConstraint("rectangle", 0.5 * (lo + hi), lo, hi)


def ball(center, r):
    c = np.asarray(center, float)
    p = c.size
    return SConstraint("minsker", c, c - r, c + r, scale=r, quad=(np.eye(p), -2 * c, r * r - c @ c))


def two_group_spec():
    """psi0 = average of psi1, psi2 bracketed by m_L/m_P <= psi <= m_U/m_P in two groups."""
    cons = []
    for g in range(2):
        L, U, P = g, 2 + g, 4 + g
        cons.append(Constraint(LinearExpr(mu={L: 1.0}, bilinear=[(P, g + 1, -1.0)])))
        cons.append(Constraint(LinearExpr(mu={U: -1.0}, bilinear=[(P, g + 1, 1.0)])))
    cons.append(Constraint(LinearExpr({0: 1.0, 1: -0.5, 2: -0.5}), "=="))
    return ProblemSpec(3, 6, LinearExpr({0: 1.0}), cons, [(-4.0, 4.0)] * 3)


def test_partition():
    np.testing.assert_allclose(partition(0.0, 1.0, 4), [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ConfigError):
        partition(0.0, 1.0, 0)
    with pytest.raises(UnboundedBilinearRange):
        partition(-math.inf, 1.0, 3)


def test_degenerate_mu_range_is_exact():
    spec = ProblemSpec(1, 1, LinearExpr({0: 1.0}), [Constraint(LinearExpr(bilinear=[(0, 0, 1.0)], const=-0.25))],
                       [(0.0, 1.0)])
    lo, hi, _, _ = outer_bounds(SolvableProblem(spec, rect([0.5], [0.5])), 1)
    assert hi == pytest.approx(0.5, abs=1e-9)
    assert lo == pytest.approx(0.0, abs=1e-9)


def test_nonbinding_bilinear_equals_lp():
    spec = ProblemSpec(2, 1, LinearExpr({0: 1.0, 1: 2.0}),
                       [Constraint(LinearExpr({0: 1.0, 1: 1.0}, const=-1.0)),
                        Constraint(LinearExpr(bilinear=[(0, 0, 1.0)], const=-100.0))],
                       [(0.0, 1.0), (0.0, 1.0)])
    lo, hi, _, _ = outer_bounds(SolvableProblem(spec, rect([0.1], [0.9])), 5)
    ref = linprog([-1, -2], A_ub=[[1, 1]], b_ub=[1], bounds=[(0, 1), (0, 1)], method="highs")
    assert hi == pytest.approx(-ref.fun, abs=1e-9)
    assert lo == pytest.approx(0.0, abs=1e-9)


def _sample_feasible(problem, rng, count):
    """Points (psi, m) of the original feasible set: m uniform in S, psi a
    random convex combination of vertices of the psi-polytope at that m."""
    spec, s = problem.spec, problem.s
    out = []
    tries = 0
    while len(out) < count and tries < 50 * count:
        tries += 1
        m = s.lo + rng.random(s.dim) * (s.hi - s.lo)
        if not s.contains(m, tol=0.0):
            continue
        kw = _psi_lp(spec, m)
        verts = []
        for _ in range(3):
            r = linprog(rng.standard_normal(spec.psi_dim), **kw)
            if r.status == 0:
                verts.append(r.x)
        if not verts:
            continue
        w = rng.dirichlet(np.ones(len(verts)))
        psi = w @ np.array(verts)
        if spec.is_feasible(psi, m, tol=1e-9):
            out.append((psi, m))
    return out


def _instances():
    rng = np.random.Generator(np.random.Philox(9))
    spec = two_group_spec()
    c = np.array([-0.4, 0.1, 0.6, 1.0, 0.5, 0.5])
    yield "two-group box", SolvableProblem(spec, rect(c - 0.15, c + 0.15))
    yield "two-group ball", SolvableProblem(spec, ball(c, 0.2))
    kt = ProblemSpec(1, 2, LinearExpr({0: 1.0}),
                     [Constraint(LinearExpr(mu={0: 1.0, 1: -1.0}, bilinear=[(0, 0, -1.0)]))], [(0.0, 1.0)])
    yield "kt", SolvableProblem(kt, rect([0.092, 0.062], [0.106, 0.074]))
    hp = ProblemSpec(1, 4, LinearExpr({0: 1.0}),
                     [Constraint(LinearExpr(mu={2 + c: 1.0}, bilinear=[(c, 0, -1.0)])) for c in range(2)],
                     [(0.0, 10.0)])
    yield "hp", SolvableProblem(hp, rect([0.8, 1.5, 1.0, 2.0], [1.2, 2.5, 2.0, 3.0]))
    x = rng.standard_normal((300, 3))
    m = compute_moments(x)
    from piid.moments import build_s
    sp = ProblemSpec(2, 3, LinearExpr({0: 1.0, 1: 1.0}),
                     [Constraint(LinearExpr({0: 1.0}, {2: -1.0}, [(0, 1, 1.0)], -0.5)),
                      Constraint(LinearExpr({1: -1.0}, {1: 1.0}, [(1, 0, -1.0)], -0.5))],
                     [(-2.0, 2.0), (-2.0, 2.0)])
    yield "random ellipsoid", SolvableProblem(sp, build_s(m, "ellipsoid", 0.05))


@pytest.mark.parametrize("name,problem", list(_instances()))
def test_feasible_points_stay_relaxation_feasible(name, problem):
    rng = np.random.Generator(np.random.Philox(zlib.crc32(name.encode())))
    rp = relax(problem, 4)
    pts = _sample_feasible(problem, rng, 1000)
    assert len(pts) == 1000
    for psi, m in pts:
        x = lift_point(rp, problem.spec, psi, m)
        assert not violations(rp.std, x, tol=1e-9), name


@pytest.mark.parametrize("name,problem", list(_instances()))
def test_outer_contains_inner_and_witnesses_verify(name, problem):
    lo, hi, st_, _ = outer_bounds(problem, 6)
    inn = inner_bounds(problem, 200, seed=1)
    assert lo <= inn["lo"] + 1e-7 and inn["hi"] <= hi + 1e-7
    for side in ("min", "max"):
        psi, m = inn[f"{side}_witness"]
        assert problem.spec.is_feasible(psi, m, tol=1e-7)
        assert problem.s.contains(m, tol=1e-6)
        assert problem.spec.objective_value(psi, m) == pytest.approx(inn[side], abs=1e-7)


def test_inner_without_pruning_agrees():
    problem = dict(_instances())["two-group ball"]
    a = inner_bounds(problem, 150, seed=3)
    b = inner_bounds(problem, 150, seed=3, prune=False)
    assert a["lo"] == pytest.approx(b["lo"], abs=1e-5)
    assert a["hi"] == pytest.approx(b["hi"], abs=1e-5)


def test_inner_grid_nested_and_monotone():
    problem = dict(_instances())["two-group box"]
    g1 = grid_mu2(problem, 50, 4)
    g2 = grid_mu2(problem, 200, 4)
    np.testing.assert_array_equal(g1, g2[:50])
    a = inner_bounds(problem, 50, seed=4)
    b = inner_bounds(problem, 200, seed=4)
    assert b["lo"] <= a["lo"] + 1e-12 and b["hi"] >= a["hi"] - 1e-12


def test_outer_tightens_with_k_on_nested_partitions():
    problem = dict(_instances())["two-group box"]
    prev = None
    for K in (1, 2, 4, 8):
        lo, hi, _, _ = outer_bounds(problem, K)
        if prev is not None:
            assert lo >= prev[0] - 1e-8 and hi <= prev[1] + 1e-8
        prev = (lo, hi)


def _psi_lp(spec, mu):
    # with m fixed every constraint is linear in psi
    A, b, Ae, be = [], [], [], []
    for c in spec.constraints:
        row = np.zeros(spec.psi_dim)
        for k, v in c.expr.psi.items():
            row[k] += v
        const = c.expr.const + sum(v * mu[k] for k, v in c.expr.mu.items())
        for j, l, v in c.expr.bilinear:
            row[l] += v * mu[j]
        (Ae if c.sense == "==" else A).append(row)
        (be if c.sense == "==" else b).append(-const)
    return dict(A_ub=np.array(A) if A else None, b_ub=b or None, A_eq=np.array(Ae) if Ae else None,
                b_eq=be or None, bounds=spec.psi_box, method="highs")


def _brute_interval(spec, mu):
    obj = np.zeros(spec.psi_dim)
    for k, v in spec.objective.psi.items():
        obj[k] = v
    kw = _psi_lp(spec, mu)
    return linprog(obj, **kw).fun, -linprog(-obj, **kw).fun


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_outer_contains_population_interval(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    spec = two_group_spec()
    mu = np.array([rng.uniform(-1, 0), rng.uniform(-1, 0), 0, 0, 0.5, 0.5])
    mu[2:4] = mu[:2] + rng.uniform(0.2, 1.0, 2)
    mu[:4] *= mu[4]
    r = rng.uniform(0.02, 0.1)
    center = mu + rng.uniform(-r, r, 6) / 2
    problem = SolvableProblem(spec, rect(center - r, center + r))
    assert problem.s.contains(mu)
    plo, phi = _brute_interval(spec, mu)
    lo, hi, _, _ = outer_bounds(problem, 5)
    assert lo <= plo + 1e-7 and hi >= phi - 1e-7


def test_algorithm1_schedule():
    problem = dict(_instances())["two-group box"]
    res = algorithm1(problem, [(2, 50), (8, 200)], gap_tol=1e-12)
    assert res.rounds == 2 and not res.converged
    assert res.outer[0] <= res.inner[0] and res.inner[1] <= res.outer[1]
    exact = dict(_instances())["kt"]
    r1 = algorithm1(exact, [(1, 1), (4, 10)], gap_tol=1.0)
    assert r1.rounds == 1 and r1.converged
    with pytest.raises(ConfigError):
        algorithm1(problem, [])


def test_mc_gap_nonincreasing_across_rounds():
    m = compute_moments(generate_sample(McDesign(n=1000), 3))
    problem = build_mc_problem(m, "box")
    gaps = []
    for sched in ([(5, 200)], [(5, 200), (10, 1000)]):
        gaps.append(algorithm1(problem, sched, gap_tol=0.0).gap)
    assert gaps[1] <= gaps[0] + 1e-9


def test_fixed_point_mode_is_single_grid_point():
    m = compute_moments(generate_sample(McDesign(n=500), 0))
    problem = build_mc_problem(m, "box")
    mu2 = problem.spec.mu2_indices
    r = inner_bounds(problem, points=m.xbar[mu2][None])
    assert r["G"] == 1
    lo, hi, _, _ = outer_bounds(problem, 10)
    assert lo <= r["lo"] and r["hi"] <= hi
