"""Constrained programs over (psi, m) with tagged bilinear m_j * psi_l terms.

A :class:`ProblemSpec` describes

    optimise  f(psi)  subject to  g(psi, m) <= 0 / = 0,  psi in a box,

where each g is affine in (psi, m) plus bilinear products.  Pairing a
spec with an S constraint on m gives a :class:`SolvableProblem`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, IoError, NonConvexObjective
from .moments import SConstraint

LE, EQ = "<=", "=="
_SENSE_ALIASES = {"<=": LE, "le": LE, "leq": LE, "==": EQ, "=": EQ, "eq": EQ}


@dataclass
class LinearExpr:
    psi: dict = field(default_factory=dict)
    mu: dict = field(default_factory=dict)
    bilinear: list = field(default_factory=list)  # (mu index j, psi index l, coeff)
    const: float = 0.0

    def __post_init__(self):
        self.psi = {int(k): float(v) for k, v in self.psi.items()}
        self.mu = {int(k): float(v) for k, v in self.mu.items()}
        self.bilinear = [(int(j), int(l), float(c)) for j, l, c in self.bilinear]
        self.const = float(self.const)

    def value(self, psi, m) -> float:
        v = self.const
        v += sum(c * psi[k] for k, c in self.psi.items())
        v += sum(c * m[k] for k, c in self.mu.items())
        v += sum(c * m[j] * psi[l] for j, l, c in self.bilinear)
        return float(v)

    @property
    def uses_mu(self) -> bool:
        return bool(self.bilinear) or any(c != 0 for c in self.mu.values())

    def scaled(self, s: float) -> "LinearExpr":
        return LinearExpr({k: s * v for k, v in self.psi.items()}, {k: s * v for k, v in self.mu.items()},
                          [(j, l, s * c) for j, l, c in self.bilinear], s * self.const)

    def plus(self, other: "LinearExpr") -> "LinearExpr":
        psi = dict(self.psi)
        for k, v in other.psi.items():
            psi[k] = psi.get(k, 0.0) + v
        mu = dict(self.mu)
        for k, v in other.mu.items():
            mu[k] = mu.get(k, 0.0) + v
        bil = {}
        for j, l, c in list(self.bilinear) + list(other.bilinear):
            bil[(j, l)] = bil.get((j, l), 0.0) + c
        return LinearExpr(psi, mu, [(j, l, c) for (j, l), c in bil.items()], self.const + other.const)

    def to_dict(self) -> dict:
        out = {}
        if self.psi:
            out["psi"] = {str(k): v for k, v in sorted(self.psi.items())}
        if self.mu:
            out["mu"] = {str(k): v for k, v in sorted(self.mu.items())}
        if self.bilinear:
            out["bilinear"] = [[j, l, c] for j, l, c in self.bilinear]
        if self.const:
            out["const"] = self.const
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LinearExpr":
        if not isinstance(d, dict):
            raise ConfigError(f"expression must be an object, got {type(d).__name__}")
        unknown = set(d) - {"psi", "mu", "bilinear", "const", "sense", "name", "quad"}
        if unknown:
            raise ConfigError(f"unknown expression field(s): {sorted(unknown)}")
        try:
            return cls(d.get("psi", {}), d.get("mu", {}), [tuple(t) for t in d.get("bilinear", [])],
                       d.get("const", 0.0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed expression {d}: {exc}") from None


@dataclass
class Constraint:
    expr: LinearExpr
    sense: str = LE
    name: str = ""

    def __post_init__(self):
        s = _SENSE_ALIASES.get(str(self.sense).lower())
        if s is None:
            raise ConfigError(f"constraint sense must be '<=' or '==', got {self.sense!r}")
        self.sense = s


@dataclass
class ProblemSpec:
    psi_dim: int
    mu_dim: int
    objective: LinearExpr
    constraints: list
    psi_box: list  # [(lo, hi)] per psi coordinate
    quad: np.ndarray | None = None  # optional psi' Q psi added to the objective
    psi_names: list | None = None
    mu_names: list | None = None

    @property
    def mu2_indices(self) -> list:
        """m coordinates that enter bilinear terms, sorted."""
        idx = set()
        for c in self.constraints:
            idx.update(j for j, _, _ in c.expr.bilinear)
        idx.update(j for j, _, _ in self.objective.bilinear)
        return sorted(idx)

    @property
    def bilinear_pairs(self) -> list:
        pairs = set()
        for c in self.constraints:
            pairs.update((j, l) for j, l, _ in c.expr.bilinear)
        pairs.update((j, l) for j, l, _ in self.objective.bilinear)
        return sorted(pairs)

    def box_arrays(self):
        box = np.asarray(self.psi_box, dtype=float).reshape(-1, 2)
        return box[:, 0].copy(), box[:, 1].copy()

    def is_feasible(self, psi, m, tol: float = 1e-7) -> bool:
        lo, hi = self.box_arrays()
        psi = np.asarray(psi, float)
        if np.any(psi < lo - tol) or np.any(psi > hi + tol):
            return False
        for c in self.constraints:
            v = c.expr.value(psi, m)
            if v > tol or (c.sense == EQ and v < -tol):
                return False
        return True

    def objective_value(self, psi, m) -> float:
        v = self.objective.value(psi, m)
        if self.quad is not None:
            psi = np.asarray(psi, float)
            v += float(psi @ self.quad @ psi)
        return v


@dataclass
class SolvableProblem:
    spec: ProblemSpec
    s: SConstraint
    sense: str = "min"

    def __post_init__(self):
        if self.s.dim != self.spec.mu_dim:
            raise ConfigError(f"S has dimension {self.s.dim} but the spec has mu_dim {self.spec.mu_dim}")
        if self.sense not in ("min", "max"):
            raise ConfigError(f"sense must be 'min' or 'max', got {self.sense!r}")


def _check_expr(expr: LinearExpr, where: str, psi_dim: int, mu_dim: int) -> list:
    out = []
    for k in expr.psi:
        if not 0 <= k < psi_dim:
            out.append(f"{where}: psi index {k} out of range [0, {psi_dim})")
    for k in expr.mu:
        if not 0 <= k < mu_dim:
            out.append(f"{where}: mu index {k} out of range [0, {mu_dim})")
    seen = set()
    for j, l, _ in expr.bilinear:
        if not 0 <= j < mu_dim:
            out.append(f"{where}: bilinear mu index {j} out of range [0, {mu_dim})")
        if not 0 <= l < psi_dim:
            out.append(f"{where}: bilinear psi index {l} out of range [0, {psi_dim})")
        if (j, l) in seen:
            out.append(f"{where}: duplicate bilinear pair ({j}, {l})")
        seen.add((j, l))
    vals = list(expr.psi.values()) + list(expr.mu.values()) + [c for _, _, c in expr.bilinear] + [expr.const]
    if not all(math.isfinite(v) for v in vals):
        out.append(f"{where}: non-finite coefficient")
    return out


def quad_curvature(Q) -> str:
    """'psd', 'nsd', 'zero' or 'indefinite'."""
    lam = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    tol = 1e-9 * max(1.0, float(np.max(np.abs(lam))))
    if np.all(np.abs(lam) <= tol):
        return "zero"
    if lam.min() >= -tol:
        return "psd"
    if lam.max() <= tol:
        return "nsd"
    return "indefinite"


def validate(spec: ProblemSpec) -> list:
    """Diagnostics for every broken invariant; empty when the spec is well formed."""
    out = []
    if spec.psi_dim < 1:
        out.append(f"psi_dim must be positive, got {spec.psi_dim}")
    if spec.mu_dim < 0:
        out.append(f"mu_dim must be non-negative, got {spec.mu_dim}")
    if len(spec.psi_box) != spec.psi_dim:
        out.append(f"psi_box has {len(spec.psi_box)} entries, expected {spec.psi_dim}")
    for i, b in enumerate(spec.psi_box):
        lo, hi = b
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            out.append(f"psi_box[{i}] = [{lo}, {hi}] is empty")
    out += _check_expr(spec.objective, "objective", spec.psi_dim, spec.mu_dim)
    for i, c in enumerate(spec.constraints):
        out += _check_expr(c.expr, f"constraint {c.name or i}", spec.psi_dim, spec.mu_dim)
    if spec.quad is not None:
        Q = np.asarray(spec.quad, dtype=float)
        if Q.shape != (spec.psi_dim, spec.psi_dim):
            out.append(f"objective quad has shape {Q.shape}, expected {(spec.psi_dim, spec.psi_dim)}")
        elif not np.allclose(Q, Q.T, atol=1e-12):
            out.append("objective quad is not symmetric")
        elif quad_curvature(Q) == "indefinite":
            out.append("objective quad is indefinite (needs PSD for min or NSD for max)")
    return out


def require_valid(spec: ProblemSpec):
    diags = validate(spec)
    if diags:
        raise ConfigError("invalid problem: " + "; ".join(diags))


def check_objective_sense(spec: ProblemSpec, sense: str):
    if spec.quad is None:
        return
    curv = quad_curvature(np.asarray(spec.quad, float))
    if (sense == "min" and curv in ("psd", "zero")) or (sense == "max" and curv in ("nsd", "zero")):
        return
    raise NonConvexObjective(f"a {curv} quadratic objective cannot be {sense}imised as a convex program")


def epigraph_rewrite(spec: ProblemSpec, sense: str = "min") -> ProblemSpec:
    """Move an m-dependent objective into a constraint.

    min f(psi, m)  ->  min t  s.t.  f(psi, m) - t <= 0
    max f(psi, m)  ->  max s  s.t.  s - f(psi, m) <= 0
    The new variable is appended as the last psi coordinate with an
    unbounded box.  Objectives free of m are returned unchanged.
    """
    if not spec.objective.uses_mu:
        return spec
    if spec.quad is not None:
        raise ConfigError("epigraph rewrite of a quadratic objective that also uses m is not supported")
    t = spec.psi_dim
    f = spec.objective
    if sense == "min":
        row = f.plus(LinearExpr({t: -1.0}))
    elif sense == "max":
        row = f.scaled(-1.0).plus(LinearExpr({t: 1.0}))
    else:
        raise ConfigError(f"sense must be 'min' or 'max', got {sense!r}")
    names = None if spec.psi_names is None else list(spec.psi_names) + ["epigraph"]
    return replace(spec, psi_dim=t + 1, objective=LinearExpr({t: 1.0}),
                   constraints=list(spec.constraints) + [Constraint(row, LE, "epigraph")],
                   psi_box=list(spec.psi_box) + [(-math.inf, math.inf)], psi_names=names)


def grid_points(L: int) -> np.ndarray:
    """L equally spaced points on [0, 1] (spacing 1/(L-1))."""
    if L < 2:
        raise ConfigError(f"grid size must be at least 2, got {L}")
    return np.linspace(0.0, 1.0, int(L))


def grid_expand(spec: ProblemSpec, family: Callable, L: int | None = None,
                points: Iterable[float] | None = None) -> ProblemSpec:
    """Instantiate a nu-indexed constraint family on a grid of nu in [0, 1].

    ``family(nu)`` returns a Constraint, a LinearExpr (read as <= 0) or a
    list of either.  Pass ``L`` for the equally spaced grid or ``points``
    for an explicit list.
    """
    if points is None:
        if L is None:
            raise ConfigError("grid_expand needs L or explicit points")
        points = grid_points(L)
    added = []
    for nu in points:
        out = family(float(nu))
        items = out if isinstance(out, (list, tuple)) else [out]
        for it in items:
            c = it if isinstance(it, Constraint) else Constraint(it, LE)
            added.append(Constraint(c.expr, c.sense, f"{c.name or 'family'}@nu={float(nu):.6g}"))
    return replace(spec, constraints=list(spec.constraints) + added)


# file format

def _num(v):
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
    return float(v)


def spec_to_dict(spec: ProblemSpec) -> dict:
    def enc(x):
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

    obj = spec.objective.to_dict()
    if spec.quad is not None:
        obj["quad"] = np.asarray(spec.quad, float).tolist()
    cons = []
    for c in spec.constraints:
        d = c.expr.to_dict()
        d["sense"] = c.sense
        if c.name:
            d["name"] = c.name
        cons.append(d)
    out = {"psi_dim": spec.psi_dim, "mu_dim": spec.mu_dim, "objective": obj,
           "constraints": cons, "psi_box": [[enc(float(lo)), enc(float(hi))] for lo, hi in spec.psi_box]}
    if spec.psi_names:
        out["psi_names"] = list(spec.psi_names)
    if spec.mu_names:
        out["mu_names"] = list(spec.mu_names)
    return out


def spec_from_dict(d: dict) -> ProblemSpec:
    try:
        psi_dim = int(d["psi_dim"])
        mu_dim = int(d["mu_dim"])
        obj_d = d.get("objective", {})
        objective = LinearExpr.from_dict({k: v for k, v in obj_d.items() if k != "quad"})
        quad = np.asarray(obj_d["quad"], dtype=float) if "quad" in obj_d else None
        cons = [Constraint(LinearExpr.from_dict({k: v for k, v in c.items() if k not in ("sense", "name")}),
                           c.get("sense", LE), c.get("name", ""))
                for c in d.get("constraints", [])]
        box = [(_num(lo), _num(hi)) for lo, hi in d["psi_box"]]
    except KeyError as exc:
        raise ConfigError(f"problem file is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed problem file: {exc}") from None
    return ProblemSpec(psi_dim, mu_dim, objective, cons, box, quad,
                       d.get("psi_names"), d.get("mu_names"))


def load_problem(path):
    """Read a problem file; returns (spec, s_options dict)."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read problem file {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return spec_from_dict(d), dict(d.get("s", {}))
