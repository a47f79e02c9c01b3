"""Branch-and-cut over binaries with outer-approximation cuts for convex
quadratic constraints.

Nodes are explored best-bound first; ties go to the deeper node, then to
the earlier-created one.  Branching picks the most fractional binary
(lowest index on ties).  Quadratic constraints are enforced lazily: at a
node whose LP point violates q(x) <= 0 a supporting hyperplane is added
to a global cut pool and the node LP is re-solved with the dual simplex.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .simplex import LPEngine
from .types import DEFAULT_TOL, Solution, StandardProblem, Status, Tolerances


def _boundary_point(qc, z_out):
    """Point where the segment interior -> z_out crosses q = 0."""
    z0 = qc.interior
    dz = z_out - z0
    a = dz @ qc.Q @ dz
    b = 2.0 * z0 @ qc.Q @ dz + qc.lin @ dz
    c = qc.value_sub(z0)  # < 0
    if a > 1e-300:
        disc = b * b - 4.0 * a * c
        tau = (-b + math.sqrt(max(disc, 0.0))) / (2.0 * a)
    elif b > 0:
        tau = -c / b
    else:
        return None
    if not 0.0 < tau < 1.0:
        return None
    return z0 + tau * dz


def _cuts_for(qc, x, n):
    """Tangent cut at the LP point and, when an interior point is known,
    a second one at the boundary point between them.  Both are valid
    linearisations of a convex function."""
    z = x[qc.idx]
    out = []
    g = qc.grad_sub(z)
    qv = qc.value_sub(z)
    # q(z) + g'(w - z) <= 0
    row = np.zeros(n)
    row[qc.idx] = g
    out.append((row, g @ z - qv))
    if qc.interior is not None:
        zb = _boundary_point(qc, z)
        if zb is not None:
            gb = qc.grad_sub(zb)
            row = np.zeros(n)
            row[qc.idx] = gb
            out.append((row, gb @ zb - qc.value_sub(zb)))
    return out


class BranchAndCut:
    def __init__(self, prob: StandardProblem, tol: Tolerances = DEFAULT_TOL):
        self.prob = prob
        self.tol = tol
        self.sign = 1.0 if prob.sense == "min" else -1.0
        self.eng = LPEngine(self.sign * prob.c, prob.A_ub, prob.b_ub, prob.A_eq, prob.b_eq,
                            prob.lb, prob.ub, tol)
        self.m0 = self.eng.m
        self.m_ub = prob.A_ub.shape[0]
        self.cut_owner = {}  # row id -> quad index
        self.cut_count = 0
        self.iter_limit = False
        # cuts dropped from the LP while slack; re-added when violated
        self.pool_rows = np.zeros((0, self.eng.n))
        self.pool_rhs = np.zeros(0)
        self.pool_owner = np.zeros(0, dtype=int)
        self.keep_cuts = max(30, 2 * len(prob.quads))
        # cuts are separated fully at the root and at integral nodes only;
        # fractional nodes branch on the current outer approximation
        self.node_rounds = 0

    def update(self, prob: StandardProblem):
        """Swap in a problem with the same shape and quadratics but new
        costs, bounds or linear coefficients, keeping basis and cuts."""
        old = self.prob
        if (prob.A_ub.shape != old.A_ub.shape or prob.A_eq.shape != old.A_eq.shape
                or len(prob.quads) != len(old.quads) or prob.sense != old.sense):
            raise ValueError("problem structure changed")
        self.prob = prob
        A = np.vstack([prob.A_ub, prob.A_eq])
        self.eng.b[:self.m0] = np.concatenate([prob.b_ub, prob.b_eq]) / self.eng.row_scale[:self.m0]
        self.eng.update_structure(self.sign * prob.c, A, prob.lb, prob.ub)
        self._purge()
        self.cut_count = 0
        self.iter_limit = False

    def _purge(self):
        """Move non-binding cuts out of the LP once there are many."""
        eng = self.eng
        ncut = eng.m - self.m0
        if ncut <= 2 * self.keep_cuts:
            return
        n = eng.n
        xs = eng.full_x()
        slack_cols = n + np.arange(self.m0, eng.m)
        basic = eng.status[slack_cols] == 0
        loose = basic & (xs[slack_cols] > 1e-9)
        cand = np.flatnonzero(loose)
        if cand.size <= ncut - self.keep_cuts:
            drop = cand
        else:
            # drop the loosest first
            order = np.argsort(-xs[slack_cols][cand])
            drop = cand[order[:ncut - self.keep_cuts]]
        if not drop.size:
            return
        rows = self.m0 + drop
        scale = eng.row_scale[rows]
        A = eng.M[rows, :n] * scale[:, None]
        rhs = eng.b[rows] * scale
        owner = np.array([self.cut_owner.pop(int(eng.row_ids[r])) for r in rows], dtype=int)
        self.pool_rows = np.vstack([self.pool_rows, A])
        self.pool_rhs = np.concatenate([self.pool_rhs, rhs])
        self.pool_owner = np.concatenate([self.pool_owner, owner])
        eng.remove_rows(rows)

    def _from_pool(self, k, x):
        """Most violated pooled cut for quad k, removed from the pool."""
        sel = np.flatnonzero(self.pool_owner == k)
        if not sel.size:
            return None
        rows = self.pool_rows[sel]
        scale = np.maximum(np.max(np.abs(rows), axis=1), 1e-300)
        v = (rows @ x - self.pool_rhs[sel]) / scale
        i = int(np.argmax(v))
        if v[i] <= self.tol.cut_violation:
            return None
        j = sel[i]
        out = (self.pool_rows[j].copy(), float(self.pool_rhs[j]))
        keep = np.ones(self.pool_rhs.size, bool)
        keep[j] = False
        self.pool_rows, self.pool_rhs, self.pool_owner = self.pool_rows[keep], self.pool_rhs[keep], self.pool_owner[keep]
        return out

    def _cut_loop(self, warm, cutoff, integral_needed=False, max_rounds=None):
        """Solve the node LP, adding cuts while quadratics are violated.

        Returns (status, value, x)."""
        eng, tol = self.eng, self.tol
        rounds = 0
        made = 0
        prev = math.inf
        while True:
            st = eng.optimize(warm)
            if st is not Status.OPTIMAL:
                return st, math.inf, None
            x = eng.full_x()[:eng.n]
            val = float(eng.c[:eng.n] @ x)
            if val >= cutoff:
                return st, val, x
            viol = [(k, qc.value(x)) for k, qc in enumerate(self.prob.quads)]
            bad = [(k, v) for k, v in viol if v > tol.cut_violation]
            if not bad:
                return st, val, x
            worst = max(v for _, v in bad)
            if worst <= 10 * tol.cut_violation and worst >= 0.99 * prev:
                # the LP's own feasibility slack is holding the point in place
                return st, val, x
            prev = worst
            if max_rounds is not None and rounds >= max_rounds and not integral_needed:
                return st, val, x
            if made >= tol.max_cuts or self.cut_count >= tol.max_cuts_total:
                self.iter_limit = True
                return Status.ITERATION_LIMIT, val, x
            rows, rhs, owners = [], [], []
            for k, _ in bad:
                pooled = self._from_pool(k, x)
                new = [pooled] if pooled is not None else _cuts_for(self.prob.quads[k], x, eng.n)
                if pooled is None:
                    made += len(new)
                    self.cut_count += len(new)
                for row, r in new:
                    rows.append(row)
                    rhs.append(r)
                    owners.append(k)
            eng.add_rows(np.array(rows), np.array(rhs))
            for rid, k in zip(eng.row_ids[-len(rows):], owners):
                self.cut_owner[int(rid)] = k
            rounds += 1
            warm = True

    def solve(self) -> Solution:
        prob, eng, tol = self.prob, self.eng, self.tol
        bins = prob.binaries
        incumbent = math.inf
        best_x = None
        best_duals = None
        counter = 0
        nodes = 0
        # node: (bound, -depth, id, fixings, basis snapshot, parent id)
        root = (-math.inf, 0, counter, {}, None, -1)
        heap = [(-math.inf, 0, counter, root)]
        last_id = None
        base_lo = prob.lb.copy()
        base_hi = prob.ub.copy()
        bound_at_exit = -math.inf
        while heap:
            bnd, negdepth, nid, node = heapq.heappop(heap)
            if bnd >= incumbent - self._gap(incumbent):
                bound_at_exit = bnd
                heap.clear()
                break
            nodes += 1
            if nodes > tol.max_nodes:
                return self._finish(Status.ITERATION_LIMIT, best_x, incumbent, nodes, best_duals,
                                    bnd, "node limit reached")
            _, _, _, fixes, snap, parent = node
            lo = base_lo.copy()
            hi = base_hi.copy()
            for j, v in fixes.items():
                lo[j] = hi[j] = v
            if bins.size:
                eng.set_bounds(bins, lo[bins], hi[bins])
            warm = nid != 0
            if snap is not None and parent != last_id:
                eng.restore(snap)
            st, val, x = self._cut_loop(warm, incumbent - self._gap(incumbent),
                                        max_rounds=None if nid == 0 else self.node_rounds)
            last_id = nid
            if st is Status.ITERATION_LIMIT:
                return self._finish(Status.ITERATION_LIMIT, best_x, incumbent, nodes, best_duals,
                                    bnd, "cut or pivot limit reached")
            if st is Status.UNBOUNDED:
                if not bins.size or nid == 0:
                    return Solution(Status.UNBOUNDED, node_count=nodes, cut_count=self.cut_count,
                                    iterations=eng.pivots)
                continue
            if st is not Status.OPTIMAL or val >= incumbent - self._gap(incumbent):
                continue
            frac = np.abs(x[bins] - np.round(x[bins])) if bins.size else np.zeros(0)
            if not bins.size or frac.max() <= tol.integrality:
                # integral: make sure the quadratics are satisfied before accepting
                st, val, x = self._cut_loop(True, incumbent - self._gap(incumbent), integral_needed=True)
                if st is Status.ITERATION_LIMIT:
                    return self._finish(Status.ITERATION_LIMIT, best_x, incumbent, nodes, best_duals,
                                        bnd, "cut limit reached")
                if st is not Status.OPTIMAL or val >= incumbent - self._gap(incumbent):
                    continue
                frac = np.abs(x[bins] - np.round(x[bins])) if bins.size else np.zeros(0)
                if not bins.size or frac.max() <= tol.integrality:
                    incumbent = val
                    best_x = x.copy()
                    best_duals = self._duals()
                    continue
            # branch on the most fractional binary, lowest index on ties
            self._purge()
            dist = np.abs(x[bins] - 0.5)
            k = int(np.argmin(dist))
            j = int(bins[k])
            snap_here = eng.snapshot()
            first = 1.0 if x[j] >= 0.5 else 0.0
            for v in (first, 1.0 - first):
                counter += 1
                child_fix = dict(fixes)
                child_fix[j] = v
                child = (val, negdepth - 1, counter, child_fix, snap_here, nid)
                heapq.heappush(heap, (val, negdepth - 1, counter, child))
        if best_x is None:
            return Solution(Status.INFEASIBLE, node_count=nodes, cut_count=self.cut_count,
                            iterations=eng.pivots)
        return self._finish(Status.OPTIMAL, best_x, incumbent, nodes, best_duals,
                            max(bound_at_exit, -math.inf), "")

    def _gap(self, inc):
        if not math.isfinite(inc):
            return 0.0
        return self.tol.optimality * max(1.0, abs(inc))

    def _duals(self):
        u = self.eng.duals()
        m_ub = self.m_ub
        du = u[:m_ub]
        de = u[m_ub:self.m0]
        dc = u[self.m0:]
        dq = np.zeros(len(self.prob.quads))
        # a cut row g'w <= g'z - q(z) underestimates q, so its multiplier
        # transfers to the quadratic itself
        for rid, mult in zip(self.eng.row_ids[self.m0:], dc):
            dq[self.cut_owner[int(rid)]] += max(mult, 0.0)
        return du, de, dq

    def _finish(self, status, x, inc, nodes, duals, bound, msg):
        sol = Solution(status, node_count=nodes, cut_count=self.cut_count,
                       iterations=self.eng.pivots, message=msg)
        if x is not None:
            sol.x = x
            sol.objective = float(self.prob.c @ x)
            sol.bound = self.sign * (inc if status is Status.OPTIMAL else bound)
            if duals is not None:
                # sign flip for max problems is already folded into -y
                sol.duals_ub, sol.duals_eq, sol.duals_quad = duals
            sol.cuts = self._binding_cuts()
        return sol

    def _binding_cuts(self):
        eng = self.eng
        n = eng.n
        xs = eng.full_x()
        out = []
        for r in range(self.m0, eng.m):
            if xs[n + r] <= 1e-9 * max(1.0, abs(eng.b[r])):
                sc = eng.row_scale[r]
                out.append((self.cut_owner[int(eng.row_ids[r])], eng.M[r, :n] * sc, float(eng.b[r] * sc)))
        return out

