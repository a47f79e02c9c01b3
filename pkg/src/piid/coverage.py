"""Finite-sample coverage bound for the moment confidence set.

The bound has two pieces: a Bentkus-Raic normal-approximation error and
delta*, the covariance-estimation error w_n(t) plus its failure
probability 2 exp(-t), minimised over the admissible range of t.
The constants mu3bar, C_Sigma and kappa1 are population quantities;
plug-in estimators are provided for convenience only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import linalg
from .errors import ConfigError, DegenerateData, InfeasibleCondition, NotPositiveDefinite
from .moments import Dataset, SampleMoments, compute_moments

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
N_GRID = 1000


@dataclass(frozen=True)
class CoverageInputs:
    p: int
    n: int
    mu3bar: float
    c_sigma: float
    kappa1: float

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ConfigError(f"p and n must be positive, got p={self.p}, n={self.n}")
        for name in ("mu3bar", "c_sigma", "kappa1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        # E|xi|^3 >= (E xi^2)^{3/2} = 1 for a standardized coordinate
        if self.mu3bar < 1.0:
            raise ConfigError(f"mu3bar must be at least 1, got {self.mu3bar}")


@dataclass(frozen=True)
class CoverageBound:
    br_term: float
    t_star: float
    delta_star: float
    lower_bound: float
    feasible: bool
    vacuous: bool

    def to_dict(self) -> dict:
        return asdict(self)


def br_term(p: int, mu3bar: float, n: int) -> float:
    return (42.0 * p ** 0.25 + 16.0) * p ** 1.5 * mu3bar / math.sqrt(n)


def r_n(t: float, n: int) -> float:
    return 8.0 * math.sqrt(2.0 * t / n)


def w_n(t: float, c_sigma: float, p: int, n: int) -> float:
    return c_sigma * p ** 3 * 2.0 ** (p + 1) * r_n(t, n)


def bernstein_lambda(kappa1: float, n: int, p: int) -> float:
    lg = math.log(2 * p)
    return math.sqrt(2.0 * lg / n) + kappa1 * lg / n


def full_r_n(t: float, n: int, p: int, kappa1: float) -> float:
    """Unsimplified radius before the admissible-t restriction is imposed."""
    lg = math.log(2 * p)
    return (2.0 * math.sqrt(2.0 * t / n) + 3.0 * math.sqrt(2.0 * lg / n)
            + 2.0 * kappa1 * t / n + 3.0 * kappa1 * lg / n)


def kappa_star(kappa1: float) -> float:
    return min(1.0 / kappa1, 2.0 / kappa1 ** 2, 0.5)


def t_interval(p: int, n: int, kappa1: float) -> tuple[float, float]:
    """Admissible range (9/4) log(2p) <= t <= kappa* n; may be empty."""
    return 2.25 * math.log(2 * p), kappa_star(kappa1) * n


def _golden(f, a: float, b: float, tol: float = 1e-8):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return t, f(t)


def delta_n_star(inputs: CoverageInputs):
    """Return ``(t_star, delta_star, feasible)``.

    The objective need not be unimodal, so a grid scan picks the best
    cell first and golden-section refines inside it.
    """
    lo, hi = t_interval(inputs.p, inputs.n, inputs.kappa1)
    if lo > hi:
        return float("nan"), float("nan"), False

    def obj(t):
        return w_n(t, inputs.c_sigma, inputs.p, inputs.n) + 2.0 * math.exp(-t)

    if hi - lo <= 1e-12 * max(1.0, hi):
        return lo, obj(lo), True
    grid = np.linspace(lo, hi, N_GRID + 1)
    vals = np.array([obj(t) for t in grid])
    i = int(np.argmin(vals))
    best_t, best_v = float(grid[i]), float(vals[i])
    a, b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, N_GRID)])
    t, v = _golden(obj, a, b)
    if v < best_v:
        best_t, best_v = t, v
    return best_t, best_v, True


def theorem3_bound(p_hat: float, inputs: CoverageInputs) -> CoverageBound:
    """Lower bound p_hat - br_term - delta*; negative values are reported, not clamped."""
    if not 0.0 <= p_hat <= 1.0:
        raise ConfigError(f"p_hat must lie in [0, 1], got {p_hat}")
    t, d, ok = delta_n_star(inputs)
    if not ok:
        lo, hi = t_interval(inputs.p, inputs.n, inputs.kappa1)
        raise InfeasibleCondition(
            f"no admissible t: need {lo:.6g} <= t <= {hi:.6g} (increase n or reduce kappa1)")
    br = br_term(inputs.p, inputs.mu3bar, inputs.n)
    lb = p_hat - br - d
    return CoverageBound(br_term=br, t_star=t, delta_star=d, lower_bound=lb,
                         feasible=True, vacuous=lb < 0)


# plug-in constants

def _as_rows(data):
    return data.rows if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def estimate_mu3bar(data, m: SampleMoments | None = None) -> float:
    x = _as_rows(data)
    m = m or compute_moments(x)
    try:
        s = linalg.inv_sqrt(m.sigma_hat)
    except NotPositiveDefinite as exc:
        raise DegenerateData(f"sigma_hat is singular: {exc}") from None
    z = (x - m.xbar) @ s
    return float(np.max(np.mean(np.abs(z) ** 3, axis=0)))


def estimate_c_sigma(m: SampleMoments) -> float:
    try:
        inv = linalg.inverse(m.sigma_hat)
    except NotPositiveDefinite as exc:
        raise DegenerateData(f"sigma_hat is singular: {exc}") from None
    return float(np.max(np.abs(inv)))


def estimate_kappa1(data, r_max: int = 8) -> float:
    """Smallest kappa1 meeting the sample Bernstein moment conditions.

    The r = 2 condition does not involve kappa1, so it is only checked
    and warned about; r = 3..r_max determine the estimate.
    """
    if r_max < 3:
        raise ConfigError(f"r_max must be at least 3, got {r_max}")
    x = _as_rows(data)
    c = x - x.mean(axis=0)
    sigma = c.T @ c / x.shape[0]
    p = x.shape[1]
    best = 0.0
    r2_fail = False
    # each coordinate, then each cross product
    blocks = [np.abs(c)]
    for j in range(p):
        blocks.append(np.abs(c[:, j:j + 1] * c[:, j:] - sigma[j, j:]))
    for a in blocks:
        if np.max(np.mean(a ** 2, axis=0)) > 1.0:
            r2_fail = True
        for r in range(3, r_max + 1):
            mr = np.max(np.mean(a ** r, axis=0))
            if mr > 0:
                best = max(best, (2.0 * mr / math.factorial(r)) ** (1.0 / (r - 2)))
    if r2_fail:
        warnings.warn("second-moment Bernstein condition fails for this data; "
                      "rescale the data or treat the kappa1 estimate with care", stacklevel=2)
    if best <= 0:
        raise DegenerateData("data are constant; kappa1 is undefined")
    return best
