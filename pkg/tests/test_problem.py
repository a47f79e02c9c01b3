import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from piid.errors import ConfigError, IoError
from piid.mccormick import outer_bounds
from piid.moments import SConstraint
from piid.problem import (Constraint, LinearExpr, ProblemSpec, SolvableProblem, epigraph_rewrite,
                          grid_expand, grid_points, load_problem, spec_from_dict, spec_to_dict, validate)
from piid.cli import fixture_path


def kt_spec():
    spec, _ = load_problem(fixture_path("kt.json"))
    return spec


def test_kt_fixture_valid():
    assert validate(kt_spec()) == []


def test_bilinear_index_out_of_range():
    spec = ProblemSpec(1, 2, LinearExpr({0: 1.0}),
                       [Constraint(LinearExpr(bilinear=[(5, 0, 1.0)]))], [(0.0, 1.0)])
    diags = validate(spec)
    assert len(diags) == 1 and "5" in diags[0]


def test_duplicate_bilinear_pair():
    spec = ProblemSpec(1, 2, LinearExpr({0: 1.0}),
                       [Constraint(LinearExpr(bilinear=[(0, 0, 1.0), (0, 0, 2.0)]))], [(0.0, 1.0)])
    diags = validate(spec)
    assert len(diags) == 1 and "duplicate" in diags[0]


def test_empty_box_and_indefinite_quad():
    spec = ProblemSpec(2, 0, LinearExpr(), [], [(1.0, 0.0), (0.0, 1.0)], quad=np.diag([1.0, -1.0]))
    diags = validate(spec)
    assert any("empty" in d for d in diags) and any("indefinite" in d for d in diags)


def test_mu2_indices():
    spec = kt_spec()
    assert spec.mu2_indices == [0]
    assert spec.bilinear_pairs == [(0, 0)]


def test_epigraph_noop_when_pure_psi():
    spec = kt_spec()
    assert epigraph_rewrite(spec, "min") is spec


def _rect(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return SConstraint("rectangle", 0.5 * (lo + hi), lo, hi)


@pytest.mark.parametrize("sense", ["min", "max"])
def test_epigraph_preserves_optimum(sense):
    # optimise psi1 + m1 over psi in [-1, 2] with psi1 <= 1.5 and m in [0.2, 0.7]
    spec = ProblemSpec(1, 1, LinearExpr({0: 1.0}, {0: 1.0}),
                       [Constraint(LinearExpr({0: 1.0}, const=-1.5))], [(-1.0, 2.0)])
    grid = [(p, m) for p in np.linspace(-1, 2, 301) for m in np.linspace(0.2, 0.7, 51)
            if spec.is_feasible([p], [m])]
    vals = [p + m for p, m in grid]
    brute = min(vals) if sense == "min" else max(vals)
    rw = epigraph_rewrite(spec, sense)
    assert rw.psi_dim == 2 and not rw.objective.uses_mu
    lo, hi, _, _ = outer_bounds(SolvableProblem(rw, _rect([0.2], [0.7]), sense), 1)
    assert (lo if sense == "min" else hi) == pytest.approx(brute, abs=1e-7)


def test_grid_points_convention():
    np.testing.assert_allclose(grid_points(2), [0.0, 1.0])
    np.testing.assert_allclose(np.diff(grid_points(11)), 0.1)
    with pytest.raises(ConfigError):
        grid_points(1)


def test_grid_expand_instances():
    base = ProblemSpec(1, 0, LinearExpr({0: 1.0}), [], [(-2.0, 2.0)])
    out = grid_expand(base, lambda nu: LinearExpr({0: 1.0}, const=-nu), L=2)
    assert len(out.constraints) == 2
    out = grid_expand(base, lambda nu: LinearExpr({0: 1.0}, const=-nu), points=[0.0, 0.25, 1.0])
    assert [c.name for c in out.constraints][1].endswith("nu=0.25")


def _max_psi(spec):
    hi = outer_bounds(SolvableProblem(spec, _rect([0.0], [0.0]), "max"), 1)[1]
    return hi


def test_grid_expand_binding_instance():
    base = ProblemSpec(1, 1, LinearExpr({0: 1.0}), [], [(-2.0, 2.0)])
    out = grid_expand(base, lambda nu: LinearExpr({0: 1.0}, const=-nu), L=11)
    assert _max_psi(out) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("sense", ["max", "min"])
def test_grid_expand_monotone_in_L(sense):
    # family psi <= 1 - nu + 0.3 sin(7 nu)  (max)  /  psi >= nu - 1 + 0.3 sin(7 nu)  (min)
    base = ProblemSpec(1, 1, LinearExpr({0: 1.0}), [], [(-3.0, 3.0)])
    sgn = 1.0 if sense == "max" else -1.0

    def fam(nu):
        return LinearExpr({0: sgn}, const=-(1.0 - nu + 0.3 * np.sin(7 * nu)))

    vals = []
    for L in (2, 3, 5, 9, 17, 33, 65):
        spec = grid_expand(base, fam, L=L)
        sol = outer_bounds(SolvableProblem(spec, _rect([0.0], [0.0]), sense), 1)
        vals.append(sol[1] if sense == "max" else -sol[0])
    # nested grids: more constraints never loosen the bound
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    exact = min(1.0 - nu + 0.3 * np.sin(7 * nu) for nu in np.linspace(0, 1, 100001))
    assert vals[-1] == pytest.approx(exact, abs=2e-3)


def test_roundtrip_file_format(tmp_path):
    spec = kt_spec()
    d = spec_to_dict(spec)
    back = spec_from_dict(json.loads(json.dumps(d)))
    assert spec_to_dict(back) == d
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_problem(p)
    with pytest.raises(IoError):
        load_problem(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        spec_from_dict({"psi_dim": 1})


coef = st.floats(-1e3, 1e3, allow_nan=False).map(lambda v: float(f"{v:.10g}"))


@given(st.lists(coef, min_size=3, max_size=3), st.lists(coef, min_size=2, max_size=2), coef)
def test_feasible_points_survive_roundtrip(a, b, c):
    expr = LinearExpr({0: a[0], 1: a[1]}, {0: b[0], 1: b[1]}, [(0, 1, a[2])], c)
    spec = ProblemSpec(2, 2, LinearExpr({0: 1.0}), [Constraint(expr)], [(-1.0, 1.0), (-1.0, 1.0)])
    back = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
    for psi, m in itertools.product([(-1, 0.5), (0.3, 1)], [(0.2, -0.4), (1.0, 1.0)]):
        assert back.constraints[0].expr.value(psi, m) == spec.constraints[0].expr.value(psi, m)
        assert back.is_feasible(psi, m) == spec.is_feasible(psi, m)
