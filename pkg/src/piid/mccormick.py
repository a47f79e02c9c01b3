"""Outer and inner bounds for programs with bilinear m_j * psi_l terms.

Outer bounds replace every product by a K-piece McCormick relaxation
(the nf4l formulation: one binary per piece of the psi range, with the
per-piece envelopes aggregated into a single Delta variable) and solve
the resulting MILP / MIQCP.  Inner bounds fix the bilinear m coordinates
at grid points drawn from the box S, which leaves a convex program whose
optimum is attained by a point feasible for the original problem.

Inner-grid subproblems are pruned with a Lagrangian bound: duals from
any solved grid point give a valid upper bound on every other grid
point's optimum (weak duality), so points that cannot beat the current
best are skipped without changing the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import solver
from .errors import AllGridInfeasible, ConfigError, SolveError, UnboundedBilinearRange
from .moments import SConstraint
from .linalg import psd_decompose
from .problem import EQ, SolvableProblem, check_objective_sense, quad_curvature, require_valid
from .solver import QuadConstraint, StandardProblem, Status

PRUNE_RTOL = 1e-9
# grid points are screened with this quadratic-cut tolerance; the winners
# are then re-solved at the requested one
SCREEN_CUT_VIOLATION = 1e-5


@dataclass
class TermVars:
    mu_index: int
    psi_index: int
    phi: int
    Delta: int
    lam: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    grid: np.ndarray
    mu_lo: float
    mu_hi: float


@dataclass
class RelaxedProgram:
    std: StandardProblem
    terms: dict  # (j, l) -> TermVars
    psi_dim: int
    mu_dim: int
    epi: int | None = None
    # lifted S pieces: (u index, t index, row g, offset) with u = g'm - offset
    s_lift: list = field(default_factory=list)

    def psi(self, x):
        return np.asarray(x)[:self.psi_dim]

    def m(self, x):
        return np.asarray(x)[self.psi_dim:self.psi_dim + self.mu_dim]


@dataclass
class IntervalResult:
    outer: tuple
    inner: tuple
    gap: float
    statuses: dict = field(default_factory=dict)
    K_used: int = 0
    G_used: int = 0
    converged: bool = False
    rounds: int = 0
    inner_witness: dict = field(default_factory=dict)
    inner_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"outer": list(self.outer), "inner": list(self.inner), "gap": self.gap,
             "statuses": self.statuses, "K_used": self.K_used, "G_used": self.G_used,
             "converged": self.converged, "rounds": self.rounds,
             "inner_counts": self.inner_counts}
        if self.inner_witness:
            d["inner_witness"] = {k: {"psi": np.asarray(v[0]).tolist(), "m": np.asarray(v[1]).tolist()}
                                  for k, v in self.inner_witness.items()}
        return d


def partition(lo: float, hi: float, K: int) -> np.ndarray:
    if K < 1:
        raise ConfigError(f"K must be at least 1, got {K}")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnboundedBilinearRange(f"psi range [{lo}, {hi}] is not finite")
    g = np.linspace(lo, hi, K + 1)
    g[0], g[-1] = lo, hi
    return g


class _Builder:
    """Accumulates sparse rows, then materialises a StandardProblem."""

    def __init__(self):
        self.s_lift = []
        self.lb, self.ub, self.ub_rows, self.eq_rows = [], [], [], []
        self.b_ub, self.b_eq = [], []
        self.binaries = []

    def var(self, lo, hi, binary=False):
        self.lb.append(lo)
        self.ub.append(hi)
        if binary:
            self.binaries.append(len(self.lb) - 1)
        return len(self.lb) - 1

    def row(self, coeffs: dict, rhs: float, eq=False):
        (self.eq_rows if eq else self.ub_rows).append(coeffs)
        (self.b_eq if eq else self.b_ub).append(rhs)
        return len(self.eq_rows if eq else self.ub_rows) - 1

    def dense(self, rows):
        n = len(self.lb)
        A = np.zeros((len(rows), n))
        for i, r in enumerate(rows):
            for j, v in r.items():
                A[i, j] += v
        return A


def _add(d: dict, k: int, v: float):
    d[k] = d.get(k, 0.0) + v


def _s_into(b: _Builder, s: SConstraint, moff: int, mu_dim: int):
    quads = []
    if s.eq is not None:
        E, e = s.eq
        for i in range(E.shape[0]):
            b.row({moff + j: E[i, j] for j in range(mu_dim) if E[i, j] != 0}, float(e[i]), eq=True)
    if s.quad is not None:
        A, lin, c = s.quad
        quads.append(QuadConstraint(np.arange(moff, moff + mu_dim), A, lin, c,
                                    interior=s.center, name="S"))
    return quads


def _s_lifted(b: _Builder, s: SConstraint, moff: int, mu_dim: int):
    """Same set with the quadratic split into one-dimensional pieces.

    Writing (m - m0)'A(m - m0) <= r^2 as u = Lam^(1/2) V'(m - m0)/r,
    sum t <= 1, u_i^2 <= t_i lets tangent cuts work on two-variable
    parabolas instead of a high-dimensional ellipsoid; far fewer cuts are
    needed and they stay useful across branch-and-bound nodes.
    """
    if s.quad is None:
        return _s_into(b, s, moff, mu_dim)
    if s.eq is not None:
        E, e = s.eq
        for i in range(E.shape[0]):
            b.row({moff + j: E[i, j] for j in range(mu_dim) if E[i, j] != 0}, float(e[i]), eq=True)
    A, lin, c = s.quad
    A = np.asarray(A, float)
    cache = getattr(s, "_lift", None)
    if cache is None or cache[0] is not s.quad:
        cache = (s.quad, *psd_decompose(A))
        s._lift = cache
    _, lam, V, _ = cache
    m0 = -0.5 * (V @ ((V.T @ lin) / lam))
    r2 = float(c + m0 @ A @ m0)
    if not r2 > 0:
        raise ConfigError(f"S is empty or a single point (radius^2 = {r2:.3g})")
    r = math.sqrt(r2)
    k = lam.size
    ts = []
    quads = []
    for i in range(k):
        u = b.var(-1.0, 1.0)
        t = b.var(0.0, 1.0)
        ts.append(t)
        g = math.sqrt(lam[i]) / r * V[:, i]
        row = {u: 1.0}
        for j in np.flatnonzero(g):
            _add(row, moff + int(j), -float(g[j]))
        b.row(row, -float(g @ m0), eq=True)
        b.s_lift.append((u, t, g, float(g @ m0)))
        # a few tangents up front, the rest come lazily
        for a in (-1.0, -0.5, 0.5, 1.0):
            b.row({u: 2.0 * a, t: -1.0}, a * a)
        quads.append(QuadConstraint([u, t], np.diag([1.0, 0.0]), [0.0, -1.0], 0.0,
                                    interior=[0.0, 0.5 / k], name=f"S[{i}]"))
    b.row({t: 1.0 for t in ts}, 1.0)
    return quads


def _objective_quads(b, spec, sense, c_obj):
    """Epigraph for a quadratic objective; returns (quads, epi index, new c)."""
    if spec.quad is None or quad_curvature(np.asarray(spec.quad, float)) == "zero":
        return [], None, c_obj
    check_objective_sense(spec, sense)
    Q = np.asarray(spec.quad, float)
    lo = np.array(b.lb)
    hi = np.array(b.ub)
    # interval bound on the objective over the variable box
    lin_lo = float(np.sum(np.minimum(c_obj[:len(lo)] * lo, c_obj[:len(lo)] * hi)))
    lin_hi = float(np.sum(np.maximum(c_obj[:len(lo)] * lo, c_obj[:len(lo)] * hi)))
    P = spec.psi_dim
    plo, phi = lo[:P], hi[:P]
    corners = np.abs(Q) * np.maximum(np.abs(plo), np.abs(phi))[:, None] * np.maximum(np.abs(plo), np.abs(phi))[None, :]
    qmax = float(np.sum(corners))
    t = b.var(lin_lo - qmax - 1.0, lin_hi + qmax + 1.0)
    nz = np.flatnonzero(c_obj)
    idx = np.unique(np.concatenate([np.arange(P), nz, [t]])).astype(int)
    pos = {v: i for i, v in enumerate(idx)}
    Qf = np.zeros((idx.size, idx.size))
    Qf[:P, :P] = Q if sense == "min" else -Q
    lin = np.zeros(idx.size)
    for j in nz:
        lin[pos[j]] = c_obj[j] if sense == "min" else -c_obj[j]
    lin[pos[t]] = -1.0 if sense == "min" else 1.0
    c_new = np.zeros(len(b.lb))
    c_new[t] = 1.0
    return [QuadConstraint(idx, Qf, lin, 0.0, name="objective")], t, c_new


def relax(problem: SolvableProblem, K: int) -> RelaxedProgram:
    """nf4l piecewise McCormick relaxation of every bilinear pair."""
    spec, s = problem.spec, problem.s
    require_valid(spec)
    P, Mu = spec.psi_dim, spec.mu_dim
    plo, phi = spec.box_arrays()
    b = _Builder()
    for i in range(P):
        b.var(plo[i], phi[i])
    moff = P
    for j in range(Mu):
        b.var(s.lo[j], s.hi[j])
    terms = {}
    for (j, l) in spec.bilinear_pairs:
        ml, mh = float(s.lo[j]), float(s.hi[j])
        if not (math.isfinite(ml) and math.isfinite(mh)):
            raise UnboundedBilinearRange(f"mu[{j}] has range [{ml}, {mh}] under S")
        grid = partition(plo[l], phi[l], K)
        w = np.diff(grid)
        dmu = mh - ml
        corners = [ml * plo[l], ml * phi[l], mh * plo[l], mh * phi[l]]
        f = b.var(min(corners), max(corners))
        D = b.var(0.0, float(np.max(w)) * dmu)
        lam = np.array([b.var(0.0, 1.0, binary=True) for _ in range(K)])
        dl = np.array([b.var(0.0, float(w[k])) for k in range(K)])
        et = np.array([b.var(0.0, dmu) for _ in range(K)])
        psi_v, mu_v = l, moff + j
        b.row({int(v): 1.0 for v in lam}, 1.0, eq=True)
        r = {psi_v: 1.0}
        for k in range(K):
            _add(r, int(lam[k]), -grid[k])
            _add(r, int(dl[k]), -1.0)
            b.row({int(dl[k]): 1.0, int(lam[k]): -w[k]}, 0.0)
        b.row(r, 0.0, eq=True)
        r = {mu_v: 1.0}
        for k in range(K):
            _add(r, int(et[k]), -1.0)
            b.row({int(et[k]): 1.0, int(lam[k]): -dmu}, 0.0)
        b.row(r, ml, eq=True)
        r = {f: 1.0, D: -1.0}
        _add(r, psi_v, -ml)
        for k in range(K):
            _add(r, int(et[k]), -grid[k])
        b.row(r, 0.0, eq=True)
        r = {D: -1.0}
        for k in range(K):
            _add(r, int(et[k]), w[k])
            _add(r, int(dl[k]), dmu)
            _add(r, int(lam[k]), -dmu * w[k])
        b.row(r, 0.0)
        r = {D: 1.0}
        for k in range(K):
            _add(r, int(dl[k]), -dmu)
        b.row(r, 0.0)
        r = {D: 1.0}
        for k in range(K):
            _add(r, int(et[k]), -w[k])
        b.row(r, 0.0)
        terms[(j, l)] = TermVars(j, l, f, D, lam, dl, et, grid, ml, mh)
    for con in spec.constraints:
        e = con.expr
        r = {}
        for k, v in e.psi.items():
            _add(r, k, v)
        for k, v in e.mu.items():
            _add(r, moff + k, v)
        for j, l, c in e.bilinear:
            _add(r, terms[(j, l)].phi, c)
        b.row(r, -e.const, eq=con.sense == EQ)
    quads = _s_lifted(b, s, moff, Mu)
    c_obj = np.zeros(len(b.lb))
    o = spec.objective
    for k, v in o.psi.items():
        c_obj[k] += v
    for k, v in o.mu.items():
        c_obj[moff + k] += v
    for j, l, c in o.bilinear:
        c_obj[terms[(j, l)].phi] += c
    oq, epi, c_obj = _objective_quads(b, spec, problem.sense, c_obj)
    quads += oq
    std = StandardProblem(c=c_obj, A_ub=b.dense(b.ub_rows), b_ub=np.array(b.b_ub),
                          A_eq=b.dense(b.eq_rows), b_eq=np.array(b.b_eq),
                          lb=np.array(b.lb), ub=np.array(b.ub), quads=quads,
                          binaries=np.array(b.binaries, dtype=int), sense=problem.sense)
    return RelaxedProgram(std, terms, P, Mu, epi, list(b.s_lift))


def lift_point(rp: RelaxedProgram, spec, psi, m) -> np.ndarray:
    """Map an original point (psi, m) to a point of the relaxation.

    Each bilinear pair takes the partition cell holding psi_l, where the
    piecewise envelope is exact; the lifted S coordinates are set to
    u = g'm - offset, t = u^2.
    """
    psi = np.asarray(psi, float)
    m = np.asarray(m, float)
    x = np.zeros(rp.std.n)
    x[:rp.psi_dim] = psi
    x[rp.psi_dim:rp.psi_dim + rp.mu_dim] = m
    for (j, l), tv in rp.terms.items():
        K = tv.lam.size
        k = int(np.clip(np.searchsorted(tv.grid, psi[l], side="right") - 1, 0, K - 1))
        x[tv.lam[k]] = 1.0
        x[tv.delta[k]] = psi[l] - tv.grid[k]
        x[tv.eta[k]] = m[j] - tv.mu_lo
        x[tv.phi] = m[j] * psi[l]
        x[tv.Delta] = (m[j] - tv.mu_lo) * (psi[l] - tv.grid[k])
    for u, t, g, off in rp.s_lift:
        x[u] = float(g @ m) - off
        x[t] = x[u] ** 2
    if rp.epi is not None:
        x[rp.epi] = spec.objective_value(psi, m)
    return x


def _objective_offset(spec):
    return spec.objective.const


def outer_bounds(problem: SolvableProblem, K: int, tol=solver.DEFAULT_TOL):
    """[min, max] of the relaxation; returns (lo, hi, statuses, solutions)."""
    out, stat, sols = [], {}, {}
    for sense in ("min", "max"):
        rp = relax(SolvableProblem(problem.spec, problem.s, sense), K)
        sol = solver.solve(rp.std, tol)
        stat[f"outer_{sense}"] = sol.status.value
        sols[sense] = sol
        if sol.status is Status.OPTIMAL:
            out.append(sol.objective + _objective_offset(problem.spec))
        elif sol.status is Status.INFEASIBLE:
            out.append(math.inf if sense == "min" else -math.inf)
        elif sol.status is Status.UNBOUNDED:
            out.append(-math.inf if sense == "min" else math.inf)
        else:
            raise SolveError(f"outer {sense} solve ended with status {sol.status.value}: {sol.message}")
    return out[0], out[1], stat, sols


# inner bounds

@dataclass
class _FixedTemplate:
    """The convex program left after fixing m2, in a form affine in m2."""

    std: StandardProblem
    mu2: np.ndarray  # m indices that are fixed
    moff: int
    bil: list  # (is_eq, row, j, l, coef)
    base_A_ub: np.ndarray
    base_A_eq: np.ndarray
    epi: int | None
    n_ub_spec: int = 0  # leading rows that come from the model, not from S
    n_eq_spec: int = 0


def _fixed_program(problem: SolvableProblem, g: np.ndarray, sense: str) -> _FixedTemplate:
    spec, s = problem.spec, problem.s
    P, Mu = spec.psi_dim, spec.mu_dim
    mu2 = np.array(spec.mu2_indices, dtype=int)
    plo, phi = spec.box_arrays()
    b = _Builder()
    for i in range(P):
        b.var(plo[i], phi[i])
    moff = P
    gmap = dict(zip(mu2.tolist(), np.asarray(g, float).tolist()))
    for j in range(Mu):
        if j in gmap:
            b.var(gmap[j], gmap[j])
        else:
            b.var(s.lo[j], s.hi[j])
    bil = []
    base_rows_ub, base_rows_eq = [], []
    for con in spec.constraints:
        e = con.expr
        r = {}
        for k, v in e.psi.items():
            _add(r, k, v)
        for k, v in e.mu.items():
            _add(r, moff + k, v)
        base = dict(r)
        is_eq = con.sense == EQ
        row_id = len(b.eq_rows if is_eq else b.ub_rows)
        for j, l, c in e.bilinear:
            _add(r, l, c * gmap[j])
            bil.append((is_eq, row_id, j, l, c))
        b.row(r, -e.const, eq=is_eq)
        (base_rows_eq if is_eq else base_rows_ub).append(base)
    n_eq_spec, n_ub_spec = len(b.eq_rows), len(b.ub_rows)
    quads = _s_lifted(b, s, moff, Mu)
    base_rows_eq += b.eq_rows[n_eq_spec:]
    base_rows_ub += b.ub_rows[n_ub_spec:]
    c_obj = np.zeros(len(b.lb))
    o = spec.objective
    for k, v in o.psi.items():
        c_obj[k] += v
    for k, v in o.mu.items():
        c_obj[moff + k] += v
    for j, l, c in o.bilinear:
        c_obj[l] += c * gmap[j]
    oq, epi, c_obj = _objective_quads(b, spec, sense, c_obj)
    quads += oq
    std = StandardProblem(c=c_obj, A_ub=b.dense(b.ub_rows), b_ub=np.array(b.b_ub),
                          A_eq=b.dense(b.eq_rows), b_eq=np.array(b.b_eq),
                          lb=np.array(b.lb), ub=np.array(b.ub), quads=quads, sense=sense)
    n = len(b.lb)

    def dense(rows):
        A = np.zeros((len(rows), n))
        for i, r in enumerate(rows):
            for k, v in r.items():
                A[i, k] += v
        return A

    return _FixedTemplate(std, mu2, moff, bil, dense(base_rows_ub), dense(base_rows_eq), epi,
                          n_ub_spec, n_eq_spec)


def grid_mu2(problem: SolvableProblem, G: int, seed: int) -> np.ndarray:
    """G uniform draws of m2 from the grid box of S, pushed onto any equality
    constraints S imposes on m.  The draw for G is a prefix of the draw for
    any larger G with the same seed."""
    if G < 1:
        raise ConfigError(f"G must be at least 1, got {G}")
    s = problem.s
    mu2 = np.array(problem.spec.mu2_indices, dtype=int)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    u = rng.random((G, mu2.size))
    lo, hi = s.grid_lo[mu2], s.grid_hi[mu2]
    pts = lo + u * (hi - lo)
    return project_mu2(s, mu2, pts)


def project_mu2(s: SConstraint, mu2, pts):
    if s.eq is None or not len(mu2):
        return pts
    E, e = s.eq
    mu1 = np.setdiff1d(np.arange(s.dim), mu2)
    E1, E2 = E[:, mu1], E[:, mu2]
    # equality combinations that do not involve m1 restrict m2 alone
    if E1.size:
        u, sv, vt = np.linalg.svd(E1)
        rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))))
        R = u[:, rank:]
    else:
        R = np.eye(E.shape[0])
    if R.shape[1] == 0:
        return pts
    C = R.T @ E2
    d = R.T @ e
    Cp = np.linalg.pinv(C)
    return pts - (pts @ C.T - d) @ Cp.T


def _quad_screen(problem: SolvableProblem, pts, mu2):
    """True where some m1 satisfies the S quadratic given m2 (Schur test)."""
    s = problem.s
    if s.quad is None or not len(mu2):
        return np.ones(len(pts), bool)
    A, lin, c = s.quad
    mu1 = np.setdiff1d(np.arange(s.dim), mu2)
    if s.eq is not None:
        E, _ = s.eq
        if np.any(np.abs(E[:, mu1]) > 1e-12):
            return np.ones(len(pts), bool)
    A11 = A[np.ix_(mu1, mu1)]
    A12 = A[np.ix_(mu1, mu2)]
    A22 = A[np.ix_(mu2, mu2)]
    try:
        lam = np.linalg.eigvalsh(A11)
        if lam.min() <= 1e-12 * max(lam.max(), 1e-300):
            return np.ones(len(pts), bool)
        A11i = np.linalg.inv(A11)
    except np.linalg.LinAlgError:
        return np.ones(len(pts), bool)
    w = pts @ A12.T * 2.0 + lin[mu1]  # linear term in m1
    minval = (np.einsum("gi,ij,gj->g", pts, A22, pts) + pts @ lin[mu2] - c
              - 0.25 * np.einsum("gi,ij,gj->g", w, A11i, w))
    return minval <= 1e-9


class _LagrangeBound:
    """Vectorised Lagrangian upper bound on the max-form optimum at each m2.

    Linear rows are dualised with the multipliers of the last solve; their
    reduced costs are affine in m2 through the bilinear coefficients.  A
    quadratic with multiplier y > 0 contributes the closed-form maximum of
    r'x - y q(x) over its positive definite block and box maxima over its
    purely linear coordinates; any other quadratic is simply dropped.
    """

    def __init__(self, tpl: _FixedTemplate, problem: SolvableProblem, sense: str):
        self.tpl = tpl
        self.sign = 1.0 if sense == "max" else -1.0
        std = tpl.std
        self.n = std.n
        self.lb = std.lb.copy()
        self.ub = std.ub.copy()
        self.m2cols = tpl.moff + tpl.mu2
        self.free = np.ones(self.n, bool)
        self.free[self.m2cols] = False
        self.usable = True
        self.qinfo = []
        for q in std.quads:
            d = np.diag(q.Q)
            curved = d > 0
            flat = ~curved
            info = None
            if curved.any() and not np.any(np.abs(q.Q[np.ix_(flat, curved)]) > 0) \
                    and not np.any(np.abs(q.Q[np.ix_(flat, flat)]) > 0) \
                    and not np.any(np.isin(q.idx, self.m2cols)):
                Qc = q.Q[np.ix_(curved, curved)]
                lam = np.linalg.eigvalsh(Qc)
                if lam.min() > 1e-12 * lam.max():
                    info = (q.idx[curved], np.linalg.inv(Qc), q.lin[curved], q.idx[flat], q.lin[flat], q.rhs)
            self.qinfo.append(info)
        self.slice = self._slice_data(problem, tpl)

    @staticmethod
    def _slice_data(problem, tpl):
        """Pieces for the exact support function of the S slice at fixed m2,
        or None when that closed form does not apply."""
        s = problem.s
        if s.quad is None or tpl.epi is not None or not tpl.mu2.size:
            return None
        if not all(q.name.startswith("S") for q in tpl.std.quads):
            return None
        A, lin, c = s.quad
        mu1 = np.setdiff1d(np.arange(s.dim), tpl.mu2)
        if not mu1.size:
            return None
        if s.eq is not None and np.any(np.abs(s.eq[0][:, mu1]) > 1e-12):
            return None
        A11 = A[np.ix_(mu1, mu1)]
        lam = np.linalg.eigvalsh(A11)
        if lam.min() <= 1e-12 * lam.max():
            return None
        return (mu1, np.linalg.inv(A11), A[np.ix_(mu1, tpl.mu2)], A[np.ix_(tpl.mu2, tpl.mu2)],
                lin[mu1], lin[tpl.mu2], float(c))

    def _bound_exact_s(self, sol, pts, tpl):
        """Dualise only the model rows and maximise over S exactly.

        With m2 = g fixed the S slice is {m1: m1'A11 m1 + w(g)'m1 <= c(g)},
        and the maximum of r'm1 over it is r'a + sqrt(rho r'A11^-1 r) with
        centre a = -A11^-1 w/2 and rho = c(g) + a'A11 a.
        """
        std = tpl.std
        k_ub, k_eq = tpl.n_ub_spec, tpl.n_eq_spec
        u = np.maximum(np.nan_to_num(sol.duals_ub[:k_ub]), 0.0)
        z = np.nan_to_num(sol.duals_eq[:k_eq])
        ct = self.sign * std.c
        r0 = ct - tpl.base_A_ub[:k_ub].T @ u - tpl.base_A_eq[:k_eq].T @ z
        const = u @ std.b_ub[:k_ub] + z @ std.b_eq[:k_eq]
        mu2pos = {j: i for i, j in enumerate(tpl.mu2.tolist())}
        B = np.zeros((self.n, tpl.mu2.size))
        for is_eq, row, j, l, coef in tpl.bil:
            mult = z[row] if is_eq else u[row]
            B[l, mu2pos[j]] += coef * mult
        R = r0[None, :] - pts @ B.T
        total = const + np.sum(R[:, self.m2cols] * pts, axis=1)
        mu1, A11i, A12, A22, lin1, lin2, c = self.slice
        cols1 = tpl.moff + mu1
        w = 2.0 * pts @ A12.T + lin1
        a = -0.5 * w @ A11i
        rho = c - np.einsum("gi,ij,gj->g", pts, A22, pts) - pts @ lin2 + 0.25 * np.einsum("gi,ij,gj->g", w, A11i, w)
        r1 = R[:, cols1]
        spread = np.sqrt(np.maximum(rho, 0.0) * np.einsum("gi,ij,gj->g", r1, A11i, r1))
        total = total + np.einsum("gi,gi->g", r1, a) + spread
        rest = self.free.copy()
        rest[cols1] = False
        # lifted S variables carry no cost once S rows are not dualised
        lift = np.zeros(self.n, bool)
        for q in std.quads:
            lift[q.idx] = True
        rest &= ~lift
        Rr = R[:, rest]
        lo, hi = self.lb[rest], self.ub[rest]
        with np.errstate(invalid="ignore"):
            box = np.where(Rr > 0, Rr * hi, Rr * lo)
        total = total + np.sum(np.where(Rr == 0, 0.0, box), axis=1)
        return np.where(rho < 0, -np.inf, total)

    def bound(self, sol, pts, tpl=None) -> np.ndarray:
        tpl = self.tpl if tpl is None else tpl
        if self.slice is not None:
            return np.minimum(self._bound_general(sol, pts, tpl), self._bound_exact_s(sol, pts, tpl))
        return self._bound_general(sol, pts, tpl)

    def _bound_general(self, sol, pts, tpl):
        std = tpl.std
        u = np.maximum(np.nan_to_num(sol.duals_ub), 0.0)
        z = np.nan_to_num(sol.duals_eq)
        yq = np.zeros(len(std.quads)) if sol.duals_quad is None else np.maximum(np.nan_to_num(sol.duals_quad), 0.0)
        ct = self.sign * std.c
        r0 = ct - tpl.base_A_ub.T @ u - tpl.base_A_eq.T @ z
        const = u @ std.b_ub + z @ std.b_eq
        mu2pos = {j: i for i, j in enumerate(tpl.mu2.tolist())}
        B = np.zeros((self.n, tpl.mu2.size))
        for is_eq, row, j, l, coef in tpl.bil:
            mult = z[row] if is_eq else u[row]
            B[l, mu2pos[j]] += coef * mult
        R = r0[None, :] - pts @ B.T  # (G, n)
        total = const + np.sum(R[:, self.m2cols] * pts, axis=1)
        handled = ~self.free
        lo, hi = self.lb, self.ub
        for y, info in zip(yq, self.qinfo):
            if info is None or y <= 0:
                continue
            ci, Qi, lc, fi, lf, rhs = info
            if handled[ci].any() or handled[fi].any():
                continue
            w = R[:, ci] - y * lc
            total = total + 0.25 / y * np.einsum("gi,ij,gj->g", w, Qi, w) + y * rhs
            Rf = R[:, fi] - y * lf
            with np.errstate(invalid="ignore"):
                bf = np.where(Rf > 0, Rf * hi[fi], Rf * lo[fi])
            total = total + np.sum(np.where(Rf == 0, 0.0, bf), axis=1)
            handled[ci] = True
            handled[fi] = True
        rest = ~handled
        Rr = R[:, rest]
        with np.errstate(invalid="ignore"):
            box = np.where(Rr > 0, Rr * hi[rest], Rr * lo[rest])
        return total + np.sum(np.where(Rr == 0, 0.0, box), axis=1)


class _FixedSolver:
    """Solves the fixed-m2 programs of one side on a single engine.

    Consecutive grid points differ only in the m2 bounds and in the
    coefficients that multiply psi, so the basis and the S cuts of the
    previous point are reused (the cuts are tangents to the same set).
    """

    def __init__(self, problem, sense, tol):
        self.problem, self.sense, self.tol = problem, sense, tol
        self.bc = None

    def __call__(self, g):
        tpl = _fixed_program(self.problem, g, self.sense)
        if np.any(tpl.std.lb > tpl.std.ub):
            return tpl, None
        reusable = all(q.name.startswith("S") for q in tpl.std.quads)
        if self.bc is None or not reusable:
            self.bc = solver.BranchAndCut(tpl.std, self.tol)
        else:
            self.bc.update(tpl.std)
        sol = self.bc.solve()
        if sol.status is Status.ITERATION_LIMIT:
            # a reused basis can be poor; retry from scratch once
            self.bc = solver.BranchAndCut(tpl.std, self.tol)
            sol = self.bc.solve()
        return tpl, sol


def _solve_fixed(problem, g, sense, tol):
    tpl = _fixed_program(problem, g, sense)
    if np.any(tpl.std.lb > tpl.std.ub):
        return tpl, None
    sol = solver.solve(tpl.std, tol)
    return tpl, sol


def _polish(problem, sense, tol, pts, loose, sign):
    """Re-solve screened points at full precision, best first, until the
    next screened value cannot beat the best re-solved one."""
    best, best_x, best_g = -math.inf, None, None
    for i in sorted(loose, key=lambda k: -loose[k]):
        if loose[i] <= best:
            break
        _, sol = _solve_fixed(problem, pts[i], sense, tol)
        if sol is None or sol.status is not Status.OPTIMAL:
            continue
        val = sign * sol.objective
        if val > best:
            best, best_x, best_g = val, sol.x, i
    if best_x is None:
        raise SolveError(f"no screened grid point could be re-solved on the {sense} side")
    return best, best_x, best_g


def inner_bounds(problem: SolvableProblem, G: int = 1000, seed: int = 0, points=None,
                 tol=solver.DEFAULT_TOL, prune: bool = True):
    """Union over the m2 grid of the fixed-m2 optima.

    Returns a dict with ``lo``, ``hi``, witnesses and per-side counts of
    solved, pruned and infeasible grid points.
    """
    spec = problem.spec
    require_valid(spec)
    mu2 = np.array(spec.mu2_indices, dtype=int)
    if points is not None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != mu2.size:
            raise ConfigError(f"grid points have {pts.shape[1]} columns, expected {mu2.size}")
        pts = project_mu2(problem.s, mu2, pts)
    elif mu2.size == 0:
        pts = np.zeros((1, 0))
    else:
        pts = grid_mu2(problem, G, seed)
    # points outside the S bounding box or failing the quadratic are infeasible outright
    inside = np.all((pts >= problem.s.lo[mu2] - 1e-12) & (pts <= problem.s.hi[mu2] + 1e-12), axis=1)
    ok = inside & _quad_screen(problem, pts, mu2)
    result = {"G": len(pts), "screened_out": int(np.sum(~ok))}
    for sense in ("min", "max"):
        sign = 1.0 if sense == "max" else -1.0
        best, best_x, best_g = -math.inf, None, None
        solved = infeasible = 0
        U = np.where(ok, math.inf, -math.inf)
        done = ~ok
        screen_tol = replace(tol, cut_violation=max(tol.cut_violation, SCREEN_CUT_VIOLATION))
        fixed = _FixedSolver(problem, sense, screen_tol)
        lagr = None
        loose = {}
        while True:
            cand = np.flatnonzero(~done)
            if not cand.size:
                break
            i = int(cand[np.argmax(U[cand])]) if np.isfinite(U[cand]).any() else int(cand[0])
            if U[i] <= best + PRUNE_RTOL * max(1.0, abs(best)) and prune:
                break
            done[i] = True
            tpl, sol = fixed(pts[i])
            solved += 1
            if sol is None or sol.status is Status.INFEASIBLE:
                infeasible += 1
                continue
            if sol.status is not Status.OPTIMAL:
                raise SolveError(f"inner {sense} solve at grid point {i} ended with "
                                 f"{sol.status.value}: {sol.message}")
            val = sign * sol.objective
            loose[i] = val
            if val > best:
                best, best_x, best_g = val, sol.x, i
            if prune and sol.duals_ub is not None:
                if lagr is None:
                    lagr = _LagrangeBound(tpl, problem, sense)
                if lagr.usable:
                    rest = np.flatnonzero(~done)
                    if rest.size:
                        U[rest] = np.minimum(U[rest], lagr.bound(sol, pts[rest], tpl))
        if best_x is None:
            raise AllGridInfeasible(f"all {len(pts)} grid points are infeasible for the {sense} side")
        if screen_tol.cut_violation > tol.cut_violation and problem.s.quad is not None:
            best, best_x, best_g = _polish(problem, sense, tol, pts, loose, sign)
        P, Mu = spec.psi_dim, spec.mu_dim
        result[sense] = sign * best + _objective_offset(spec)
        result[f"{sense}_witness"] = (best_x[:P].copy(), best_x[P:P + Mu].copy())
        result[f"{sense}_grid_index"] = best_g
        result[f"{sense}_counts"] = {"solved": solved, "infeasible": infeasible,
                                     "pruned": int(len(pts) - solved - int(np.sum(~ok)))}
    result["lo"], result["hi"] = result["min"], result["max"]
    return result


def algorithm1(problem: SolvableProblem, schedule, gap_tol: float = 0.05, max_rounds: int | None = None,
               seed: int = 0, tol=solver.DEFAULT_TOL) -> IntervalResult:
    """Tighten outer/inner bounds over a schedule of (K, G) until the gap closes."""
    schedule = list(schedule)
    if not schedule:
        raise ConfigError("schedule must contain at least one (K, G) pair")
    if max_rounds is not None:
        schedule = schedule[:max_rounds]
    olo, ohi = -math.inf, math.inf
    ilo, ihi = math.inf, -math.inf
    statuses, witness, counts = {}, {}, {}
    res = None
    for r, (K, G) in enumerate(schedule, start=1):
        lo, hi, st, _ = outer_bounds(problem, K, tol)
        olo, ohi = max(olo, lo), min(ohi, hi)
        inn = inner_bounds(problem, G, seed, tol=tol)
        if inn["lo"] < ilo:
            ilo = inn["lo"]
            witness["lo"] = inn["min_witness"]
        if inn["hi"] > ihi:
            ihi = inn["hi"]
            witness["hi"] = inn["max_witness"]
        statuses = dict(st, inner_min="Optimal", inner_max="Optimal")
        counts = {"min": inn["min_counts"], "max": inn["max_counts"], "screened_out": inn["screened_out"]}
        gap = max(ilo - olo, ohi - ihi, 0.0)
        res = IntervalResult((olo, ohi), (ilo, ihi), gap, statuses, K, G, gap <= gap_tol, r,
                             dict(witness), counts)
        if gap <= gap_tol:
            break
    return res
