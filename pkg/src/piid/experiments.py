"""Monte Carlo replication of the interval-data extrapolation design.

Model: Y* = h(Z) + e with h(z) = 2z, Z uniform on six support points,
e ~ U[-1/2, 1/2].  Only [L, U] = [Y* + V 1(V<0), Y* + V 1(V>=0)] is
observed.  The target is h(0), which is off the support, so it is only
partially identified through monotonicity of h.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import robust
from .errors import ConfigError, EmptyGroup, PiidError, SolveError
from .mccormick import inner_bounds, outer_bounds
from .moments import Dataset, SConstraint, Shape, build_s, compute_moments
from .problem import Constraint, LinearExpr, ProblemSpec, SolvableProblem

Z_SUPPORT = (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5)
J = len(Z_SUPPORT)
P_DIM = 3 * J
PSI_BOX = (-5.0, 5.0)
PSI_NAMES = ["h(0)"] + [f"h({z:g})" for z in Z_SUPPORT]
MU_NAMES = ([f"E[L 1(Z={z:g})]" for z in Z_SUPPORT] + [f"E[U 1(Z={z:g})]" for z in Z_SUPPORT]
            + [f"P(Z={z:g})" for z in Z_SUPPORT])
# rows act on (h(0), h(-3/2), h(-1), h(-1/2), h(1/2), h(1), h(3/2))
MONOTONE = np.array([
    [1, 0, 0, 0, -1, 0, 0],
    [-1, 0, 0, 1, 0, 0, 0],
    [0, 1, -1, 0, 0, 0, 0],
    [0, 0, 1, -1, 0, 0, 0],
    [0, 0, 0, 0, 1, -1, 0],
    [0, 0, 0, 0, 0, 1, -1],
], dtype=float)


def h(z):
    return 2.0 * np.asarray(z, dtype=float)


class VDist(str, Enum):
    NORMAL = "normal"
    T3 = "t3"

    @classmethod
    def parse(cls, v):
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower().replace("(", "").replace(")", "")
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown error distribution {v!r}") from None


class Mode(str, Enum):
    OUTER = "outer"
    INNER = "inner"
    FIXED = "fixed"
    MINSKER = "minsker"

    @classmethod
    def parse(cls, v):
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower()
        key = {"fixedcovariate": "fixed", "fixing": "fixed"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown bound mode {v!r}") from None


@dataclass(frozen=True)
class McDesign:
    n: int = 1000
    reps: int = 100
    v_dist: VDist = VDist.NORMAL
    shape: Shape = Shape.BOX
    mode: Mode = Mode.OUTER
    K: int = 10
    G: int = 1000
    alpha: float = 0.05
    seed: int = 0
    n_sims: int = 1000
    minsker_delta: float = 0.025
    # low-dimensional mean vector: coordinate-wise medians
    minsker_variant: str = "coordinatewise"

    def __post_init__(self):
        object.__setattr__(self, "v_dist", VDist.parse(self.v_dist))
        object.__setattr__(self, "shape", Shape.parse(self.shape))
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.n < 50:
            raise ConfigError(f"n must be at least 50, got {self.n}")
        if self.reps < 1:
            raise ConfigError(f"reps must be at least 1, got {self.reps}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass
class McRow:
    design: McDesign
    avg_lower: float
    avg_upper: float
    coverage: float
    failures: int
    truth: tuple
    rep_details: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self, details: bool = True) -> dict:
        d = {"n": self.design.n, "reps": self.design.reps, "v_dist": self.design.v_dist.value,
             "shape": self.design.shape.value, "mode": self.design.mode.value,
             "K": self.design.K, "G": self.design.G, "alpha": self.design.alpha,
             "seed": self.design.seed, "avg_lower": self.avg_lower, "avg_upper": self.avg_upper,
             "coverage": self.coverage, "failures": self.failures, "truth": list(self.truth)}
        if details:
            d["reps_detail"] = self.rep_details
        return d


# data

def _rng(seed: int, rep: int, extra: int | None = None) -> np.random.Generator:
    key = [int(seed), int(rep)] + ([int(extra)] if extra is not None else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _draw_v(rng, n, v_dist: VDist):
    z = rng.standard_normal(n)
    if v_dist is VDist.NORMAL:
        return z
    chi = np.sum(rng.standard_normal((n, 3)) ** 2, axis=1)
    return z / np.sqrt(chi / 3.0)


def _sample_once(design: McDesign, rng, v_override=None):
    n = design.n
    zi = rng.integers(0, J, size=n)
    e = rng.uniform(-0.5, 0.5, size=n)
    v = _draw_v(rng, n, design.v_dist) if v_override is None else np.broadcast_to(
        np.asarray(v_override, float), (n,))
    ystar = h(np.asarray(Z_SUPPORT)[zi]) + e
    low = ystar + v * (v < 0)
    up = ystar + v * (v >= 0)
    ind = (zi[:, None] == np.arange(J)[None, :]).astype(float)
    x = np.hstack([low[:, None] * ind, up[:, None] * ind, ind])
    return x, np.bincount(zi, minlength=J)


def generate_sample(design: McDesign, rep_index: int, v_override=None) -> Dataset:
    """18-column moment data for one repetition; deterministic in (seed, rep)."""
    x, counts = _sample_once(design, _rng(design.seed, rep_index), v_override)
    if np.any(counts == 0):
        # redraw once from a derived stream
        x, counts = _sample_once(design, _rng(design.seed, rep_index, 1), v_override)
        if np.any(counts == 0):
            raise EmptyGroup(f"rep {rep_index}: support point(s) "
                             f"{[Z_SUPPORT[j] for j in np.flatnonzero(counts == 0)]} drew no observations")
    return Dataset(x)


# problem

def build_mc_spec() -> ProblemSpec:
    cons = []
    for j in range(J):
        l, u, p = j, J + j, 2 * J + j
        psi = j + 1
        cons.append(Constraint(LinearExpr(mu={l: 1.0}, bilinear=[(p, psi, -1.0)]), "<=", f"lower[{j}]"))
        cons.append(Constraint(LinearExpr(mu={u: -1.0}, bilinear=[(p, psi, 1.0)]), "<=", f"upper[{j}]"))
    for r in range(MONOTONE.shape[0]):
        cons.append(Constraint(LinearExpr(psi={k: v for k, v in enumerate(MONOTONE[r]) if v}),
                               "<=", f"monotone[{r}]"))
    return ProblemSpec(psi_dim=J + 1, mu_dim=P_DIM, objective=LinearExpr(psi={0: 1.0}),
                       constraints=cons, psi_box=[PSI_BOX] * (J + 1),
                       psi_names=PSI_NAMES, mu_names=MU_NAMES)


def build_mc_problem(moments, shape=Shape.BOX, alpha: float = 0.05, n_sims: int = 1000,
                     seed: int = 0, s: SConstraint | None = None, sense: str = "min") -> SolvableProblem:
    if s is None:
        if moments.p != P_DIM:
            raise ConfigError(f"expected {P_DIM} moments, got {moments.p}")
        s = build_s(moments, shape, alpha, n_sims, seed)
    return SolvableProblem(build_mc_spec(), s, sense)


# truth

def _t3_pdf(v):
    c = math.gamma(2.0) / (math.sqrt(3.0 * math.pi) * math.gamma(1.5))
    return c * (1.0 + v * v / 3.0) ** -2


def _positive_part_mean(pdf, nodes: int = 400) -> float:
    """E[V 1(V>0)] by Gauss-Legendre after mapping [0, inf) to [0, 1)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    v = u / (1.0 - u)
    jac = 1.0 / (1.0 - u) ** 2
    return float(np.sum(wu * v * pdf(v) * jac))


def true_identified_set(v_dist=VDist.NORMAL) -> tuple:
    """Population interval for h(0): +-(1 + E[V+]).

    The bound on h(0) comes from h(1/2) <= E[U | Z = 1/2] = 1 + E[V+]
    and symmetrically below.
    """
    v_dist = VDist.parse(v_dist)
    if v_dist is VDist.NORMAL:
        ev = 1.0 / math.sqrt(2.0 * math.pi)
    else:
        ev = _positive_part_mean(np.vectorize(_t3_pdf))
    hi = h(0.5) + ev
    return (-float(hi), float(hi))


def population_moments(v_dist=VDist.NORMAL) -> np.ndarray:
    """Exact mean vector of the 18 moment columns."""
    lo, hi = true_identified_set(v_dist)
    ev = hi - 1.0
    p = np.full(J, 1.0 / J)
    hz = h(Z_SUPPORT)
    return np.concatenate([(hz - ev) * p, (hz + ev) * p, p])


# runs

def _solve_rep(design: McDesign, data: Dataset, rep: int, modes) -> dict:
    m = compute_moments(data)
    out = {}
    s_cache = {}
    for mode, shape in modes:
        key = (mode, shape)
        try:
            if mode is Mode.MINSKER:
                mr = robust.median_of_means(data, design.minsker_delta, design.minsker_variant)
                s = mr.to_s()
            else:
                if shape not in s_cache:
                    s_cache[shape] = build_s(m, shape, design.alpha, design.n_sims,
                                             _kappa_seed(design.seed, rep))
                s = s_cache[shape]
            prob = build_mc_problem(m, s=s)
            if mode in (Mode.OUTER, Mode.MINSKER):
                lo, hi, st, _ = outer_bounds(prob, design.K)
                out[key] = {"lower": lo, "upper": hi}
            elif mode is Mode.INNER:
                r = inner_bounds(prob, design.G, _grid_seed(design.seed, rep))
                out[key] = {"lower": r["lo"], "upper": r["hi"], "counts": {
                    "min": r["min_counts"], "max": r["max_counts"], "screened_out": r["screened_out"]}}
            else:
                mu2 = np.array(prob.spec.mu2_indices)
                r = inner_bounds(prob, points=m.xbar[mu2][None, :])
                out[key] = {"lower": r["lo"], "upper": r["hi"]}
        except PiidError as exc:
            out[key] = {"error": f"{exc.category}: {exc}"}
    return out


def _kappa_seed(seed, rep):
    return int(np.random.SeedSequence([int(seed), int(rep), 7]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _grid_seed(seed, rep):
    return int(np.random.SeedSequence([int(seed), int(rep), 11]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _rep_worker(args):
    design, rep, modes = args
    try:
        data = generate_sample(design, rep)
    except PiidError as exc:
        return rep, {key: {"error": f"{exc.category}: {exc}"} for key in modes}
    return rep, _solve_rep(design, data, rep, modes)


def _threads() -> int:
    raw = os.environ.get("PIID_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"PIID_THREADS must be an integer, got {raw!r}") from None
    return max(1, k)


def _map_reps(design, modes, progress=None):
    jobs = [(design, rep, modes) for rep in range(design.reps)]
    k = min(_threads(), len(jobs))
    results = {}
    if k > 1:
        import multiprocessing as mp
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with ctx.Pool(k) as pool:
            for rep, res in pool.imap_unordered(_rep_worker, jobs):
                results[rep] = res
                if progress:
                    progress(rep, res)
    else:
        for job in jobs:
            rep, res = _rep_worker(job)
            results[rep] = res
            if progress:
                progress(rep, res)
    # ordered reduction keeps output independent of scheduling
    return [results[r] for r in range(design.reps)]


def _row(design, per_rep, key, truth, seconds) -> McRow:
    lows, ups, details, fails = [], [], [], 0
    covered = 0
    for rep, res in enumerate(per_rep):
        r = res[key]
        d = {"rep": rep, **r}
        details.append(d)
        if "error" in r:
            fails += 1
            continue
        lows.append(r["lower"])
        ups.append(r["upper"])
        if r["lower"] <= truth[0] and r["upper"] >= truth[1]:
            covered += 1
    ok = len(lows)
    if fails > 0.05 * design.reps:
        raise SolveError(f"{fails} of {design.reps} repetitions failed for "
                         f"{key[1].value}/{key[0].value} (limit 5%)")
    return McRow(design=design, avg_lower=float(np.mean(lows)) if ok else float("nan"),
                 avg_upper=float(np.mean(ups)) if ok else float("nan"),
                 coverage=covered / ok if ok else float("nan"), failures=fails,
                 truth=truth, rep_details=details, seconds=seconds)


def run_mc_multi(design: McDesign, configs, progress=None) -> list:
    """Several (mode, shape) configurations evaluated on shared data per rep."""
    configs = [(Mode.parse(mo), Shape.parse(sh)) for mo, sh in configs]
    t0 = time.perf_counter()
    per_rep = _map_reps(design, configs, progress)
    secs = time.perf_counter() - t0
    truth = true_identified_set(design.v_dist)
    return [_row(replace(design, mode=mo, shape=sh), per_rep, (mo, sh), truth, secs) for mo, sh in configs]


def run_mc(design: McDesign, progress=None) -> McRow:
    return run_mc_multi(design, [(design.mode, design.shape)], progress)[0]


def run_minsker_comparison(design: McDesign, progress=None) -> tuple:
    """(ellipsoid outer, Minsker outer) on the same samples."""
    rows = run_mc_multi(design, [(Mode.OUTER, Shape.ELLIPSOID), (Mode.MINSKER, Shape.MINSKER)], progress)
    return rows[0], rows[1]
