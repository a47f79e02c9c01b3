"""Sample moments and the confidence set S for sqrt(n) (Xbar - m).

S comes in four shapes.  Box and Ellipsoid are built here from sample
moments; MinskerBall and FixedRectangle are built in :mod:`piid.robust`
but share the :class:`SConstraint` container so that every solver path
sees one interface: a bounding box, optional linear equalities and an
optional convex quadratic.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg, special
from .errors import ConfigError, DegenerateData, IoError, NotPositiveDefinite, ZeroVariance

DEFAULT_N_SIMS = 1000


class Shape(str, Enum):
    BOX = "box"
    ELLIPSOID = "ellipsoid"
    MINSKER = "minsker"
    RECTANGLE = "rectangle"

    @classmethod
    def parse(cls, value) -> "Shape":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"minskerball": "minsker", "fixedrectangle": "rectangle", "cp": "rectangle"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown S shape {value!r}") from None


@dataclass(frozen=True)
class Dataset:
    rows: np.ndarray

    def __post_init__(self):
        x = np.array(self.rows, dtype=float, ndmin=2)
        if x.ndim != 2:
            raise ConfigError(f"data must be a 2-d table, got shape {x.shape}")
        if x.shape[0] < 2:
            raise ConfigError(f"need at least 2 observations, got {x.shape[0]}")
        if x.shape[1] < 1:
            raise ConfigError("data has no columns")
        if not np.all(np.isfinite(x)):
            i, j = np.argwhere(~np.isfinite(x))[0]
            raise ConfigError(f"non-finite value at row {i + 1}, column {j + 1}")
        x.setflags(write=False)
        object.__setattr__(self, "rows", x)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class SampleMoments:
    xbar: np.ndarray
    sigma_hat: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.xbar.shape[0]

    @property
    def d_hat(self) -> np.ndarray:
        return np.diag(self.sigma_hat).copy()


@dataclass
class SConstraint:
    """The set S, stored in m-space (already divided by sqrt(n)).

    ``lo``/``hi`` always hold a finite bounding box of the feasible m.
    ``quad`` is ``(A, b, c)`` meaning m'Am + b'm <= c, and ``eq`` is
    ``(E, e)`` meaning E m = e.  Box and FixedRectangle need neither.
    """

    shape: Shape
    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    kappa: float = float("nan")
    alpha: float = float("nan")
    n: int = 0
    scale: object = None
    quad: tuple | None = None
    eq: tuple | None = None
    # box used to draw inner-bound grids; defaults to lo/hi
    grid_lo: np.ndarray | None = None
    grid_hi: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shape = Shape.parse(self.shape)
        self.center = np.asarray(self.center, dtype=float)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.center.shape or self.hi.shape != self.center.shape:
            raise ConfigError("S bounds and center have different lengths")
        if np.any(self.lo > self.hi):
            j = int(np.argmax(self.lo > self.hi))
            raise ConfigError(f"S bounds cross at coordinate {j}: {self.lo[j]} > {self.hi[j]}")
        if self.shape in (Shape.BOX, Shape.ELLIPSOID) and not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.shape is Shape.MINSKER and not float(self.scale) > 0:
            raise ConfigError(f"Minsker radius must be positive, got {self.scale}")
        if self.grid_lo is None:
            self.grid_lo = self.lo.copy()
        if self.grid_hi is None:
            self.grid_hi = self.hi.copy()

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, m, tol: float = 1e-9) -> bool:
        m = np.asarray(m, dtype=float)
        span = np.maximum(self.hi - self.lo, 1.0)
        if np.any(m < self.lo - tol * span) or np.any(m > self.hi + tol * span):
            return False
        if self.eq is not None:
            E, e = self.eq
            if np.max(np.abs(E @ m - e), initial=0.0) > tol * max(1.0, np.max(np.abs(e), initial=0.0)):
                return False
        if self.quad is not None:
            A, b, c = self.quad
            if m @ A @ m + b @ m - c > tol * max(1.0, abs(c)):
                return False
        return True

    def to_dict(self) -> dict:
        out = {"shape": self.shape.value, "alpha": self.alpha, "kappa": self.kappa,
               "n": self.n, "center": self.center.tolist(),
               "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.shape is Shape.MINSKER:
            out["radius"] = float(self.scale)
        out.update(self.info)
        return out


def read_csv(path) -> Dataset:
    """Headerless numeric CSV, one observation per row."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot read data file {path}: {exc.strerror or exc}") from None
    rows = []
    with fh:
        for i, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for j, cell in enumerate(rec, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IoError(f"{path}: non-numeric cell {cell.strip()!r} at row {i}, column {j}") from None
            if rows and len(vals) != len(rows[0]):
                raise IoError(f"{path}: row {i} has {len(vals)} columns, expected {len(rows[0])}")
            rows.append(vals)
    if not rows:
        raise IoError(f"{path}: no data rows")
    try:
        return Dataset(np.array(rows))
    except ConfigError as exc:
        raise IoError(f"{path}: {exc}") from None


def compute_moments(data) -> SampleMoments:
    if not isinstance(data, Dataset):
        data = Dataset(data)
    x = data.rows
    n = x.shape[0]
    xbar = x.mean(axis=0)
    # divisor n, as in n^{-1} sum X X' - Xbar Xbar'
    sigma = (x - xbar).T @ (x - xbar) / n
    sigma = 0.5 * (sigma + sigma.T)
    const = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if const.size:
        warnings.warn(f"constant data column(s) {const.tolist()}: sigma_hat is singular",
                      DegenerateDataWarning, stacklevel=2)
    return SampleMoments(xbar=xbar, sigma_hat=sigma, n=n)


class DegenerateDataWarning(UserWarning):
    pass


def _normal_factor(sigma):
    try:
        return linalg.cholesky(sigma)
    except NotPositiveDefinite:
        return linalg.psd_factor(sigma)


def box_kappa(m: SampleMoments, alpha: float, n_sims: int = DEFAULT_N_SIMS, seed: int = 0) -> float:
    """Simulated (1-alpha) quantile of max_j |W_j| / sqrt(d_j), W ~ N(0, sigma_hat).

    Uses the order statistic at index ceil((1-alpha) n_sims).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if n_sims < 100:
        raise ConfigError(f"n_sims must be at least 100, got {n_sims}")
    d = m.d_hat
    if np.any(d <= 0):
        raise ZeroVariance(f"zero variance in coordinate(s) {np.flatnonzero(d <= 0).tolist()}")
    F = _normal_factor(m.sigma_hat)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    z = rng.standard_normal((n_sims, F.shape[1]))
    stats = np.max(np.abs(z @ F.T) / np.sqrt(d), axis=1)
    stats.sort()
    k = math.ceil((1.0 - alpha) * n_sims - 1e-9)
    return float(stats[min(max(k, 1), n_sims) - 1])


def chi2_quantile(dof: int, prob: float) -> float:
    return special.chi2_quantile(dof, prob)


def _box_halfwidth(m: SampleMoments, kappa: float) -> np.ndarray:
    return kappa * np.sqrt(m.d_hat / m.n)


def build_s(m: SampleMoments, shape, alpha: float = 0.05, n_sims: int = DEFAULT_N_SIMS,
            seed: int = 0, grid_kappa: float | None = None) -> SConstraint:
    """Box or Ellipsoid S from sample moments.

    For the ellipsoid a singular sigma_hat is handled on its range: the
    pseudo-inverse defines the quadratic, the null space is pinned by
    equalities N'(m - Xbar) = 0 and the chi-square dof is the rank.
    The ellipsoid's inner-bound grid box is the simulated box S.
    """
    shape = Shape.parse(shape)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    xbar = m.xbar
    if shape is Shape.BOX:
        kappa = box_kappa(m, alpha, n_sims, seed)
        h = _box_halfwidth(m, kappa)
        return SConstraint(Shape.BOX, xbar, xbar - h, xbar + h, kappa=kappa, alpha=alpha,
                           n=m.n, scale=m.d_hat)
    if shape is not Shape.ELLIPSOID:
        raise ConfigError(f"build_s handles box and ellipsoid only, got {shape.value}")
    lam, vr, vnull = linalg.psd_decompose(m.sigma_hat)
    rank = lam.shape[0]
    if rank == 0:
        raise DegenerateData("sigma_hat is zero; the ellipsoid is a point")
    kappa = chi2_quantile(rank, 1.0 - alpha)
    P = (vr / lam) @ vr.T
    P = 0.5 * (P + P.T)
    # n (m - Xbar)' P (m - Xbar) <= kappa, scaled by 1/kappa
    A = P * (m.n / kappa)
    b = -2.0 * A @ xbar
    c = 1.0 - xbar @ A @ xbar
    eq = None
    info = {"rank": rank}
    if vnull.shape[1]:
        E = vnull.T
        eq = (E, E @ xbar)
    h = np.sqrt(kappa * np.maximum(m.d_hat, 0.0) / m.n)
    if grid_kappa is None:
        grid_kappa = box_kappa(m, alpha, n_sims, seed)
    gh = _box_halfwidth(m, grid_kappa)
    info["grid_kappa"] = float(grid_kappa)
    return SConstraint(Shape.ELLIPSOID, xbar, xbar - h, xbar + h, kappa=kappa, alpha=alpha,
                       n=m.n, scale=P, quad=(A, b, c), eq=eq,
                       grid_lo=xbar - gh, grid_hi=xbar + gh, info=info)
