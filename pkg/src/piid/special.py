"""Incomplete gamma/beta functions and the quantiles built on them.

Series and continued-fraction evaluations follow the usual Lentz scheme;
quantiles are found by safeguarded Newton/bisection on these CDFs.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by its power series, good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # Q(a, x) by continued fraction, good for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_cdf(q: float, dof: float) -> float:
    return gammainc_lower(0.5 * dof, 0.5 * q)


def chi2_pdf(q: float, dof: float) -> float:
    if q <= 0:
        return 0.0
    k = 0.5 * dof
    return math.exp((k - 1.0) * math.log(q) - 0.5 * q - k * math.log(2.0) - math.lgamma(k))


def chi2_quantile(dof: int, prob: float, tol: float = 1e-12) -> float:
    """Value q with chi2_cdf(q, dof) == prob."""
    if dof < 1 or int(dof) != dof:
        raise ValueError("dof must be a positive integer")
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie in (0, 1)")
    # bracket
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < prob:
        lo, hi = hi, 2.0 * hi
    q = 0.5 * (lo + hi)
    # relative to the smaller tail so extreme quantiles keep their digits
    ftol = tol * min(prob, 1.0 - prob)
    for _ in range(500):
        f = chi2_cdf(q, dof) - prob
        if abs(f) <= ftol or hi - lo <= 1e-15 * hi:
            return q
        if f > 0:
            hi = q
        else:
            lo = q
        dens = chi2_pdf(q, dof)
        nq = q - f / dens if dens > 0 else 0.5 * (lo + hi)
        if not lo < nq < hi:
            nq = 0.5 * (lo + hi)
        if nq == q:
            return q
        q = nq
    return q


def _beta_cf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _beta_cf(b, a, 1.0 - x) / b


def beta_quantile(a: float, b: float, prob: float, tol: float = 1e-12) -> float:
    """Bisection inverse of betainc in x.

    The stopping width is relative to x: quantiles near 0 or 1 sit where
    the density can be huge, and an absolute width would leave the CDF
    visibly off there.
    """
    if prob <= 0.0:
        return 0.0
    if prob >= 1.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol * min(hi, 1.0 - lo):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if betainc(a, b, mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))
