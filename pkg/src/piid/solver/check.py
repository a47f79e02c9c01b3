"""Independent feasibility check that re-evaluates the original data."""

from __future__ import annotations

import numpy as np

from .types import StandardProblem


def violations(prob: StandardProblem, x, tol: float = 1e-7, int_tol: float = 1e-6) -> list[str]:
    """Human-readable list of violated constraints; empty when x is feasible.

    Linear rows are judged after dividing by their largest coefficient,
    matching the solver's row scaling.
    """
    x = np.asarray(x, dtype=float)
    out = []
    if x.shape != (prob.n,):
        return [f"x has shape {x.shape}, expected ({prob.n},)"]
    lo_bad = np.flatnonzero(x < prob.lb - tol * np.maximum(1.0, np.abs(prob.lb)))
    hi_bad = np.flatnonzero(x > prob.ub + tol * np.maximum(1.0, np.abs(prob.ub)))
    out += [f"x[{j}] = {x[j]:.10g} below lb {prob.lb[j]:.10g}" for j in lo_bad]
    out += [f"x[{j}] = {x[j]:.10g} above ub {prob.ub[j]:.10g}" for j in hi_bad]
    for name, A, b, eq in (("ub", prob.A_ub, prob.b_ub, False), ("eq", prob.A_eq, prob.b_eq, True)):
        if not A.shape[0]:
            continue
        s = np.max(np.abs(A), axis=1)
        s[s == 0] = 1.0
        r = (A @ x - b) / s
        bad = np.flatnonzero(np.abs(r) > tol) if eq else np.flatnonzero(r > tol)
        out += [f"{name} row {i}: residual {r[i]:.3e}" for i in bad]
    for k, qc in enumerate(prob.quads):
        v = qc.value(x)
        if v > tol:
            out.append(f"quadratic {qc.name or k}: value {v:.3e}")
    if prob.binaries.size:
        xb = x[prob.binaries]
        bad = prob.binaries[np.abs(xb - np.round(xb)) > int_tol]
        out += [f"binary x[{j}] = {x[j]:.10g} not integral" for j in bad]
    return out


def is_feasible(prob: StandardProblem, x, tol: float = 1e-7) -> bool:
    return not violations(prob, x, tol)
