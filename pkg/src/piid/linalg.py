"""Small dense symmetric linear algebra.

Matrices here are at most a few dozen rows (moment dimensions), so the
routines favour clarity and exact symmetry over speed.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite

SPD_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_sym(a, atol: float = 1e-9) -> np.ndarray:
    """Return `a` as a float array stored exactly symmetric.

    Raises ValueError when `a` is not square or visibly asymmetric.
    """
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > atol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a."""
    a = as_sym(a)
    p = a.shape[0]
    tol = SPD_RTOL * max(float(np.max(np.diag(a))), 0.0)
    L = np.zeros_like(a)
    for j in range(p):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol or pivot <= 0.0:
            raise NotPositiveDefinite(f"pivot {j} = {pivot:.3e} fails tolerance {tol:.3e}")
        L[j, j] = np.sqrt(pivot)
        if j + 1 < p:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def sym_eigen(a, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition.

    Returns ``(eigenvalues, Q)`` with eigenvalues sorted descending and
    ``Q @ diag(eigenvalues) @ Q.T == a``.
    """
    a = as_sym(a).copy()
    p = a.shape[0]
    q = np.eye(p)
    if p == 1:
        return a.diagonal().copy(), q
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(p), q
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= 1e-14 * norm:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = a[i, j]
                if abs(aij) <= 1e-18 * norm:
                    a[i, j] = a[j, i] = 0.0
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * aij)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ai = a[:, i].copy()
                aj = a[:, j].copy()
                a[:, i] = c * ai - s * aj
                a[:, j] = s * ai + c * aj
                ri = a[i, :].copy()
                rj = a[j, :].copy()
                a[i, :] = c * ri - s * rj
                a[j, :] = s * ri + c * rj
                a[i, j] = a[j, i] = 0.0
                qi = q[:, i].copy()
                q[:, i] = c * qi - s * q[:, j]
                q[:, j] = s * qi + c * q[:, j]
    else:
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off > 1e-12 * norm:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], q[:, order]


def _spd_eigen(a):
    lam, q = sym_eigen(a)
    if lam[-1] <= SPD_RTOL * max(lam[0], 0.0) or lam[0] <= 0.0:
        raise NotPositiveDefinite(
            f"min eigenvalue {lam[-1]:.3e} vs max {lam[0]:.3e}")
    return lam, q


def inv_sqrt(a) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    lam, q = _spd_eigen(a)
    m = (q / np.sqrt(lam)) @ q.T
    return 0.5 * (m + m.T)


def inverse(a) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor."""
    L = cholesky(a)
    p = L.shape[0]
    linv = np.zeros_like(L)
    eye = np.eye(p)
    # forward substitution, column by column
    for i in range(p):
        linv[i] = (eye[i] - L[i, :i] @ linv[:i]) / L[i, i]
    m = linv.T @ linv
    return 0.5 * (m + m.T)


def psd_decompose(a, rtol: float = 1e-10):
    """Split a PSD matrix into its range and null space.

    Returns ``(lam, v_range, v_null)`` where ``a ~= v_range @ diag(lam) @ v_range.T``
    and eigenvalues below ``rtol * max(lam)`` count as zero.
    """
    lam, q = sym_eigen(a)
    top = max(lam[0], 0.0)
    keep = lam > rtol * top if top > 0 else np.zeros(lam.shape, bool)
    if np.any(lam < -1e-8 * max(top, 1.0)):
        raise NotPositiveDefinite(f"matrix has eigenvalue {lam[-1]:.3e}")
    return lam[keep], q[:, keep], q[:, ~keep]


def psd_factor(a, rtol: float = 1e-10) -> np.ndarray:
    """Factor F with F @ F.T == a for a PSD (possibly singular) matrix."""
    lam, vr, _ = psd_decompose(a, rtol)
    return vr * np.sqrt(lam)


def pseudo_inverse(a, rtol: float = 1e-10) -> np.ndarray:
    lam, vr, _ = psd_decompose(a, rtol)
    m = (vr / lam) @ vr.T
    return 0.5 * (m + m.T)
