"""Problem and result containers shared by the solver stack."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import ConfigError


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-8
    cut_violation: float = 1e-7
    integrality: float = 1e-6
    reduced_cost: float = 1e-9
    pivot: float = 1e-9
    max_pivots: int = 50_000
    max_nodes: int = 1_000_000
    max_cuts: int = 500  # per cut loop
    max_cuts_total: int = 50000
    refactor_every: int = 64
    bland_after: int = 1000


DEFAULT_TOL = Tolerances()


@dataclass
class QuadConstraint:
    """x_I' Q x_I + lin' x_I <= rhs on the variable subset I = idx.

    ``interior`` (optional) is a point on I where the constraint holds
    strictly; it lets the cut loop place cuts on the boundary.
    """

    idx: np.ndarray
    Q: np.ndarray
    lin: np.ndarray
    rhs: float
    interior: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=int)
        k = self.idx.shape[0]
        self.Q = np.asarray(self.Q, dtype=float).reshape(k, k)
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.lin = np.asarray(self.lin, dtype=float).reshape(k)
        self.rhs = float(self.rhs)
        if len(set(self.idx.tolist())) != k:
            raise ConfigError("quadratic constraint lists a variable twice")
        if self.interior is not None:
            self.interior = np.asarray(self.interior, dtype=float).reshape(k)
            if self.value_sub(self.interior) >= 0:
                self.interior = None

    def value_sub(self, z) -> float:
        return float(z @ self.Q @ z + self.lin @ z - self.rhs)

    def value(self, x) -> float:
        return self.value_sub(np.asarray(x, dtype=float)[self.idx])

    def grad_sub(self, z) -> np.ndarray:
        return 2.0 * self.Q @ z + self.lin


@dataclass
class StandardProblem:
    """min or max c'x subject to A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub,
    convex quadratic constraints and binary restrictions."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    quads: list = field(default_factory=list)
    binaries: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.shape[0]
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel().copy()
        self.binaries = (np.zeros(0, dtype=int) if self.binaries is None
                         else np.unique(np.asarray(self.binaries, dtype=int)))
        if self.sense not in ("min", "max"):
            raise ConfigError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.A_ub.shape[0] != self.b_ub.shape[0] or self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise ConfigError("constraint matrix and right-hand side lengths differ")
        if self.lb.shape[0] != n or self.ub.shape[0] != n:
            raise ConfigError("bound vectors have the wrong length")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ConfigError(f"variable {j} has lb {self.lb[j]} > ub {self.ub[j]}")
        if self.binaries.size and (self.binaries.min() < 0 or self.binaries.max() >= n):
            raise ConfigError("binary index out of range")
        self.lb[self.binaries] = np.maximum(self.lb[self.binaries], 0.0)
        self.ub[self.binaries] = np.minimum(self.ub[self.binaries], 1.0)
        for q in self.quads:
            if q.idx.size and (q.idx.min() < 0 or q.idx.max() >= n):
                raise ConfigError("quadratic constraint index out of range")
            lam = np.linalg.eigvalsh(q.Q) if q.Q.size else np.zeros(1)
            if lam.min() < -1e-9 * max(1.0, abs(lam).max()):
                raise ConfigError(f"quadratic constraint {q.name or ''} is not convex "
                                  f"(eigenvalue {lam.min():.3e})")

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class Solution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    node_count: int = 0
    cut_count: int = 0
    iterations: int = 0
    duals_ub: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    duals_quad: np.ndarray | None = None
    bound: float = float("nan")
    message: str = ""
    # binding cuts at exit: (quad index, row, rhs)
    cuts: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL
