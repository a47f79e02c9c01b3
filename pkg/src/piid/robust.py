"""Alternative constructions of S: median-of-means balls and exact
binomial rectangles, plus the two-regime choice-probability bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, KTooLarge, NonPositiveDenominator
from .moments import Dataset, SConstraint, Shape
from .special import beta_quantile


class Variant(str, Enum):
    GEOMETRIC = "geometric"
    COORDINATEWISE = "coordinatewise"

    @classmethod
    def parse(cls, v):
        if isinstance(v, cls):
            return v
        try:
            return cls(str(v).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown median-of-means variant {v!r}") from None


# (alpha*, p*) per variant
_CONSTANTS = {Variant.GEOMETRIC: (7.0 / 18.0, 0.1), Variant.COORDINATEWISE: (0.5, 0.12)}


@dataclass
class MinskerResult:
    center: np.ndarray
    radius: float
    k: int
    trace_hat: float
    variant: Variant
    delta: float
    n_used: int = 0
    psi_box: tuple | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if self.k < 1:
            raise ConfigError(f"k must be at least 1, got {self.k}")

    def to_s(self, alpha: float | None = None) -> SConstraint:
        """Ball (m - c)'(m - c) <= r^2 as a constraint object."""
        c = np.asarray(self.center, float)
        r = float(self.radius)
        p = c.size
        quad = (np.eye(p), -2.0 * c, r * r - float(c @ c))
        if alpha is None:
            alpha = 2.0 * self.delta
        return SConstraint(Shape.MINSKER, c, c - r, c + r, alpha=alpha, n=self.n_used, scale=r,
                           quad=quad, info={"k": self.k, "trace_hat": self.trace_hat,
                                            "variant": self.variant.value, "delta": self.delta})

    def to_dict(self) -> dict:
        return {"center": np.asarray(self.center).tolist(), "radius": self.radius, "k": self.k,
                "trace_hat": self.trace_hat, "variant": self.variant.value, "delta": self.delta,
                "n_used": self.n_used}


def minsker_psi(alpha: float, p_star: float) -> float:
    if not (0 < alpha < 1 and 0 < p_star < 1):
        raise ConfigError(f"need 0 < alpha, p_star < 1, got {alpha}, {p_star}")
    return (1 - alpha) * math.log((1 - alpha) / (1 - p_star)) + alpha * math.log(alpha / p_star)


def minsker_k(delta: float, variant=Variant.GEOMETRIC, n: int | None = None) -> int:
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    a, p = _CONSTANTS[Variant.parse(variant)]
    k = int(math.floor(math.log(1.0 / delta) / minsker_psi(a, p))) + 1
    if n is not None and k > n / 2:
        raise KTooLarge(f"k = {k} groups exceeds n/2 = {n / 2}; increase delta or n")
    return k


def geometric_median(points, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Weiszfeld iteration with the Vardi-Zhang correction at data points."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] == 0:
        raise ConfigError("geometric median needs at least one point")
    if x.shape[0] == 1:
        return x[0].copy()
    # start at the coordinate-wise median: symmetric in the input order
    y = np.median(x, axis=0)
    scale = max(1.0, float(np.max(np.abs(x))))
    eps = 1e-12 * scale
    for _ in range(max_iter):
        d = np.linalg.norm(x - y, axis=1)
        near = d <= eps
        w = 1.0 / np.where(near, 1.0, d)
        w[near] = 0.0
        if w.sum() == 0:
            return y
        t = (w[:, None] * x).sum(axis=0) / w.sum()
        if near.any():
            # y sits on a data point: move only if the pull of the others wins
            r = ((x - y) * w[:, None]).sum(axis=0)
            rn = np.linalg.norm(r)
            eta = float(near.sum())
            if rn <= eta:
                return y
            gamma = min(1.0, eta / rn)
            t = (1 - gamma) * t + gamma * y
        step = np.linalg.norm(t - y)
        y = t
        if step < tol * scale:
            break
    return y


def _groups(x: np.ndarray, k: int):
    size = x.shape[0] // k
    return [x[j * size:(j + 1) * size] for j in range(k)], size


def median_of_means(data, delta: float, variant=Variant.GEOMETRIC, shuffle_seed: int | None = None,
                    psi_box=None) -> MinskerResult:
    """Median-of-means center and confidence radius from contiguous groups."""
    variant = Variant.parse(variant)
    x = data.rows if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if shuffle_seed is not None:
        rng = np.random.Generator(np.random.Philox(shuffle_seed))
        x = x[rng.permutation(x.shape[0])]
    n, p = x.shape
    k = minsker_k(delta, variant, n)
    blocks, size = _groups(x, k)
    means = np.array([b.mean(axis=0) for b in blocks])
    traces = np.array([np.mean(np.sum((b - mu) ** 2, axis=1)) for b, mu in zip(blocks, means)])
    t_hat = float(np.median(traces))
    if variant is Variant.GEOMETRIC:
        center = geometric_median(means)
        radius = 11.0 * math.sqrt(2.0) * math.sqrt(t_hat * math.log(1.4 / delta) / n)
    else:
        center = np.median(means, axis=0)
        ell = math.log(1.6 * p / delta)
        denom = n - 2.4 * ell
        if denom <= 0:
            raise NonPositiveDenominator(f"n = {n} is not above 2.4 log(1.6 d/delta) = {2.4 * ell:.4g}")
        radius = 4.4 * math.sqrt(2.0) * math.sqrt(t_hat * ell / denom)
    if not radius > 0:
        raise ConfigError("median-of-means radius is zero; the data have no spread")
    return MinskerResult(center, radius, k, t_hat, variant, delta, n_used=k * size)


@dataclass
class ConditionReport:
    ok: bool
    lhs: float
    rhs: float

    def __bool__(self):
        return self.ok

    def to_dict(self):
        return {"ok": self.ok, "lhs": self.lhs, "rhs": self.rhs}


def minsker_condition_check(data, delta: float) -> ConditionReport:
    """Plug-in check of the fourth-moment condition behind the ball radius."""
    x = data.rows if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    sq = np.sum((x - x.mean(axis=0)) ** 2, axis=1)
    tr = float(sq.mean())
    m4 = float(np.mean(sq ** 2))
    lhs = 15.2 * math.sqrt(max(m4 - tr * tr, 0.0) / (tr * tr)) if tr > 0 else math.inf
    ell = math.log(1.4 / delta)
    rhs = (0.5 - 178.0 * ell / n) * math.sqrt(n / ell)
    return ConditionReport(bool(lhs <= rhs), lhs, rhs)


# exact binomial intervals

def clopper_pearson(successes: int, trials: int, conf: float = 0.95) -> tuple:
    if not 0 < conf < 1:
        raise ConfigError(f"conf must lie in (0, 1), got {conf}")
    x, n = int(successes), int(trials)
    if not 0 <= x <= n or n < 1:
        raise ConfigError(f"need 0 <= successes <= trials and trials >= 1, got {x}, {n}")
    a = 1.0 - conf
    lo = 0.0 if x == 0 else beta_quantile(x, n - x + 1, a / 2)
    hi = 1.0 if x == n else beta_quantile(x + 1, n - x, 1 - a / 2)
    return lo, hi


def cp_rectangle(xA: int, nA: int, xJ: int, nJ: int, joint_conf: float = 0.95) -> SConstraint:
    """Product of two exact intervals at level sqrt(joint_conf) each.

    Valid jointly when the two samples are independent.
    """
    if not 0 < joint_conf < 1:
        raise ConfigError(f"joint_conf must lie in (0, 1), got {joint_conf}")
    c = math.sqrt(joint_conf)
    la, ua = clopper_pearson(xA, nA, c)
    lj, uj = clopper_pearson(xJ, nJ, c)
    center = np.array([xA / nA, xJ / nJ])
    return SConstraint(Shape.RECTANGLE, center, np.array([la, lj]), np.array([ua, uj]),
                       alpha=1.0 - joint_conf, n=min(nA, nJ), scale=np.array([[la, ua], [lj, uj]]),
                       info={"margin_conf": c, "counts": [int(xA), int(nA), int(xJ), int(nJ)]})


def kt_lower(region: SConstraint) -> float:
    """min psi s.t. mA - mJ - mA psi <= 0, psi >= 0, (mA, mJ) in the rectangle."""
    la, uj = float(region.lo[0]), float(region.hi[1])
    if not la > 0:
        raise ConfigError(f"lower end of the first interval must be positive, got {la}")
    return max(0.0, (la - uj) / la)


def kt_problem(region: SConstraint):
    """The same bound posed as a bilinear program for the relaxation pipeline."""
    from .problem import Constraint, LinearExpr, ProblemSpec, SolvableProblem

    spec = ProblemSpec(psi_dim=1, mu_dim=2, objective=LinearExpr(psi={0: 1.0}),
                       constraints=[Constraint(LinearExpr(mu={0: 1.0, 1: -1.0}, bilinear=[(0, 0, -1.0)]),
                                               "<=", "choice")],
                       psi_box=[(0.0, 1.0)], psi_names=["pi"], mu_names=["mA", "mJ"])
    return SolvableProblem(spec, region, "min")


def kt_lower_milp(region: SConstraint, K: int = 10) -> float:
    """Lower bound via the piecewise relaxation.

    The constraint is monotone in each variable, so the optimum sits at
    the rectangle corner (L_A, U_J) where mA is fixed at a breakpoint and
    the relaxation is exact.
    """
    from .mccormick import outer_bounds

    lo, _, _, _ = outer_bounds(kt_problem(region), K)
    return lo


def kt_counts(nA: int, pA: float, nJ: int, pJ: float) -> tuple:
    """Counts reconstructed by rounding p_hat * n."""
    return int(round(pA * nA)), int(round(pJ * nJ))
