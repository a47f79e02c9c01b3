"""Dense bounded-variable revised simplex.

Rows are stored scaled as [A | I] (x, s) = b with one slack per row:
s in [0, inf) for <= rows and s in [0, 0] for equalities.  The basis
inverse is kept explicitly, updated by rank-one pivots and rebuilt from
scratch every ``refactor_every`` pivots.

The primal method starts from any basis (a composite phase 1 minimises
the sum of bound violations).  The dual method is used to re-optimise
after bounds change or rows are appended, which keeps the previous
basis dual feasible.
"""

from __future__ import annotations

import numpy as np

from .types import DEFAULT_TOL, Status, Tolerances

BASIC, AT_LO, AT_HI, FREE = 0, 1, 2, 3


class LPEngine:
    def __init__(self, c, A_ub, b_ub, A_eq, b_eq, lb, ub, tol: Tolerances = DEFAULT_TOL):
        self.tol = tol
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        A = np.vstack([np.asarray(A_ub, float).reshape(-1, n), np.asarray(A_eq, float).reshape(-1, n)])
        b = np.concatenate([np.asarray(b_ub, float).ravel(), np.asarray(b_eq, float).ravel()])
        m_ub = np.asarray(b_ub).size
        self.n = n
        s = np.max(np.abs(A), axis=1) if A.shape[0] else np.zeros(0)
        s[s == 0] = 1.0
        self.row_scale = s
        m = A.shape[0]
        self.M = np.hstack([A / s[:, None], np.eye(m)])
        self.b = b / s
        self.is_eq = np.arange(m) >= m_ub
        self.lo = np.concatenate([np.asarray(lb, float), np.zeros(m)])
        self.hi = np.concatenate([np.asarray(ub, float), np.where(self.is_eq, 0.0, np.inf)])
        self.c = np.concatenate([c, np.zeros(m)])
        self.status = np.empty(n + m, dtype=np.int8)
        self.x = np.zeros(n + m)
        self.basis = np.arange(n, n + m)
        self._set_nonbasic(np.arange(n))
        self.status[self.basis] = BASIC
        self.Binv = np.eye(m)
        self.since_refactor = 0
        self.pivots = 0
        self.row_ids = np.arange(m)
        self._next_id = m

    # bookkeeping

    @property
    def m(self) -> int:
        return self.M.shape[0]

    def _set_nonbasic(self, idx, prefer=None):
        lo, hi = self.lo[idx], self.hi[idx]
        st = np.where(np.isfinite(lo), AT_LO, np.where(np.isfinite(hi), AT_HI, FREE))
        if prefer is not None:
            want_hi = (prefer == AT_HI) & np.isfinite(hi)
            want_lo = (prefer == AT_LO) & np.isfinite(lo)
            st = np.where(want_hi, AT_HI, np.where(want_lo, AT_LO, st))
        self.status[idx] = st
        self.x[idx] = np.where(st == AT_LO, lo, np.where(st == AT_HI, hi, 0.0))

    def set_bounds(self, idx, lo, hi):
        idx = np.asarray(idx, dtype=int)
        self.lo[idx] = lo
        self.hi[idx] = hi
        nb = idx[self.status[idx] != BASIC]
        if nb.size:
            self._set_nonbasic(nb, prefer=self.status[nb].copy())

    def add_rows(self, rows, rhs):
        """Append <= rows; their slacks enter the basis."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rows.shape[0]
        s = np.max(np.abs(rows), axis=1)
        s[s == 0] = 1.0
        rows = rows / s[:, None]
        m, N = self.M.shape
        newM = np.zeros((m + k, N + k))
        newM[:m, :N] = self.M
        newM[m:, :self.n] = rows
        newM[m:, N:] = np.eye(k)
        self.M = newM
        self.b = np.concatenate([self.b, rhs / s])
        self.row_scale = np.concatenate([self.row_scale, s])
        self.is_eq = np.concatenate([self.is_eq, np.zeros(k, bool)])
        self.lo = np.concatenate([self.lo, np.zeros(k)])
        self.hi = np.concatenate([self.hi, np.full(k, np.inf)])
        self.c = np.concatenate([self.c, np.zeros(k)])
        self.x = np.concatenate([self.x, np.zeros(k)])
        self.status = np.concatenate([self.status, np.full(k, BASIC, np.int8)])
        aB = newM[m:, self.basis]
        Binv = np.zeros((m + k, m + k))
        Binv[:m, :m] = self.Binv
        Binv[m:, :m] = -aB @ self.Binv
        Binv[m:, m:] = np.eye(k)
        self.Binv = Binv
        self.basis = np.concatenate([self.basis, np.arange(N, N + k)])
        self.row_ids = np.concatenate([self.row_ids, np.arange(self._next_id, self._next_id + k)])
        self._next_id += k

    def update_structure(self, c, A, lb, ub):
        """Replace costs, bounds and the original-row coefficients in place.

        Appended cut rows are kept.  Row scales stay as first computed so
        cut multipliers remain comparable; the basis is refactored.
        """
        n, m0 = self.n, A.shape[0]
        self.c[:n] = c
        self.M[:m0, :n] = A / self.row_scale[:m0, None]
        self.lo[:n] = lb
        self.hi[:n] = ub
        nb = np.flatnonzero(self.status[:n] != BASIC)
        self._set_nonbasic(nb, prefer=self.status[nb].copy())
        self.refactor()

    def remove_rows(self, rows):
        """Drop <= rows whose slacks are basic.

        With the slack of row i basic at position r, deleting row i and
        column r of B leaves an inverse equal to Binv minus row r and
        column i, so no refactorisation is needed.
        """
        rows = np.unique(np.asarray(rows, dtype=int))
        if not rows.size:
            return
        n, m = self.n, self.m
        pos = np.full(n + m, -1)
        pos[self.basis] = np.arange(m)
        rpos = pos[n + rows]
        if np.any(rpos < 0) or np.any(self.is_eq[rows]):
            raise ValueError("only inequality rows with basic slacks can be removed")
        keep_r = np.setdiff1d(np.arange(m), rows)
        keep_p = np.setdiff1d(np.arange(m), rpos)
        self.Binv = self.Binv[np.ix_(keep_p, keep_r)]
        keep_c = np.concatenate([np.arange(n), n + keep_r])
        self.M = self.M[np.ix_(keep_r, keep_c)]
        # renumber columns
        newidx = np.full(n + m, -1)
        newidx[keep_c] = np.arange(keep_c.size)
        self.basis = newidx[self.basis[keep_p]]
        self.b = self.b[keep_r]
        self.row_scale = self.row_scale[keep_r]
        self.is_eq = self.is_eq[keep_r]
        self.lo, self.hi, self.c = self.lo[keep_c], self.hi[keep_c], self.c[keep_c]
        self.x, self.status = self.x[keep_c], self.status[keep_c]
        self.row_ids = self.row_ids[keep_r]

    def snapshot(self):
        """Basis keyed by structural index or row id, so it survives row removal."""
        n = self.n
        keys = np.where(self.basis < n, self.basis, -1 - self.row_ids[np.maximum(self.basis - n, 0)])
        nb_status = {int(j): int(self.status[j]) for j in range(n) if self.status[j] != BASIC}
        nb_rows = {int(self.row_ids[i]): int(self.status[n + i]) for i in range(self.m)
                   if self.status[n + i] != BASIC}
        return keys, nb_status, nb_rows

    def restore(self, snap) -> bool:
        """Re-install a saved basis; returns False (keeping the current one)
        if rows removed since make it unusable."""
        keys, nb_status, nb_rows = snap
        n, m = self.n, self.m
        where = {int(r): i for i, r in enumerate(self.row_ids)}
        basis = []
        for k in keys:
            if k >= 0:
                basis.append(int(k))
            elif int(-1 - k) in where:
                basis.append(n + where[int(-1 - k)])
        known = {int(-1 - k) for k in keys if k < 0} | set(nb_rows)
        for rid, i in where.items():
            if rid not in known:
                basis.append(n + i)
        if len(basis) != m:
            return False
        status = np.full(n + m, BASIC, np.int8)
        status[:] = AT_LO
        status[np.asarray(basis, int)] = BASIC
        for j, st in nb_status.items():
            status[j] = st
        for rid, st in nb_rows.items():
            if rid in where:
                status[n + where[rid]] = st
        old = (self.basis, self.status.copy(), self.x.copy(), self.Binv)
        self.basis = np.asarray(basis, int)
        self.status = status
        nb = np.flatnonzero(status != BASIC)
        self._set_nonbasic(nb, prefer=status[nb])
        B = self.M[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
            ok = np.all(np.isfinite(Binv)) and np.max(np.abs(Binv @ B - np.eye(m))) < 1e-6
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            self.basis, self.status, self.x, self.Binv = old
            return False
        self.Binv = Binv
        self.since_refactor = 0
        return True

    def refactor(self):
        B = self.M[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
            ok = np.all(np.isfinite(Binv)) and np.max(np.abs(Binv @ B - np.eye(self.m))) < 1e-6
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            self._slack_basis()
            return
        self.Binv = Binv
        self.since_refactor = 0

    def _slack_basis(self):
        n, m = self.n, self.m
        self.status[:] = BASIC
        self.basis = np.arange(n, n + m)
        self._set_nonbasic(np.arange(n))
        self.Binv = np.eye(m)
        self.since_refactor = 0

    def _pivot(self, r, q, col):
        piv = col[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(col, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.status[q] = BASIC
        self.pivots += 1
        self.since_refactor += 1
        if self.since_refactor >= self.tol.refactor_every:
            self.refactor()

    def basic_values(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        return self.Binv @ (self.b - self.M @ xn)

    def full_x(self):
        x = self.x.copy()
        x[self.basis] = self.basic_values()
        return x

    def objective(self):
        return float(self.c[:self.n] @ self.full_x()[:self.n])

    def duals(self):
        """Row multipliers u >= 0 (for <= rows) with c - A'y = d; returned as u = -y unscaled."""
        y = self.c[self.basis] @ self.Binv
        return -y / self.row_scale

    # primal simplex

    def primal(self, max_pivots=None) -> Status:
        """Primal simplex with a cycle guard.

        Harris steps let basics drift just outside their bounds, so the
        method can bounce between the phase-1 and phase-2 objectives and
        cycle in a way Bland's rule cannot stop.  A repeated basis
        triggers a refactorization, Bland's rule, and a shift of the
        violated bounds onto the current values (one fixed objective from
        then on).  The true bounds are restored at the end and any
        leftover infeasibility is removed by the dual method, which starts
        from the dual-feasible optimal basis.
        """
        limit = self.tol.max_pivots if max_pivots is None else max_pivots
        start = self.pivots
        saved = []
        st = self._primal_loop(limit, saved)
        if not saved:
            return st
        return self._unshift(st, saved, limit - (self.pivots - start))

    def _unshift(self, st, saved, left) -> Status:
        self.lo, self.hi = saved[0]
        self._reset_nonbasic_values()
        if st is Status.OPTIMAL:
            dual = self.dual(max_pivots=max(left, 1))
            if dual is not None:
                return dual
        if st in (Status.INFEASIBLE, Status.ITERATION_LIMIT):
            # a relaxation that is infeasible leaves the original infeasible
            return st
        return self._primal_loop(max(left, 1), None)

    def _reset_nonbasic_values(self):
        at_lo = self.status == AT_LO
        at_hi = self.status == AT_HI
        self.x[at_lo] = self.lo[at_lo]
        self.x[at_hi] = self.hi[at_hi]

    def _shift_bounds(self, saved):
        self.refactor()
        xb = self.basic_values()
        j = self.basis
        low = xb < self.lo[j]
        high = xb > self.hi[j]
        saved.append((self.lo.copy(), self.hi.copy()))
        self.lo = self.lo.copy()
        self.hi = self.hi.copy()
        self.lo[j[low]] = xb[low]
        self.hi[j[high]] = xb[high]

    def _primal_loop(self, limit, saved) -> Status:
        tol = self.tol
        ftol, dtol, ptol = tol.feasibility, tol.reduced_cost, tol.pivot
        degenerate = 0
        bland = False
        start = self.pivots
        seen = set()
        while True:
            if self.pivots - start >= limit:
                return Status.ITERATION_LIMIT
            if not bland:
                sig = hash((self.basis.tobytes(), self.status.tobytes()))
                if sig in seen:
                    bland = True
                    if saved is not None and not saved:
                        self._shift_bounds(saved)
                    else:
                        self.refactor()
                seen.add(sig)
            xb = self.basic_values()
            lb, ub = self.lo[self.basis], self.hi[self.basis]
            below = xb < lb - ftol
            above = xb > ub + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                cost = None
            else:
                cb = self.c[self.basis]
                cost = self.c
            y = cb @ self.Binv
            d = -(y @ self.M) if cost is None else cost - y @ self.M
            st = self.status
            cand = (((st == AT_LO) & (d < -dtol)) | ((st == AT_HI) & (d > dtol))
                    | ((st == FREE) & (np.abs(d) > dtol)))
            cand &= self.lo < self.hi
            if not cand.any():
                if phase1:
                    return Status.INFEASIBLE
                return Status.OPTIMAL
            # once switched, stay with Bland's rule for the rest of this call
            bland = bland or degenerate >= tol.bland_after
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            sigma = 1.0 if d[q] < 0 else -1.0
            col = self.Binv @ self.M[:, q]
            rate = -sigma * col
            t, r, target = self._ratio(xb, lb, ub, rate, below, above, bland)
            span = self.hi[q] - self.lo[q]
            if np.isfinite(span) and span <= t:
                # bound flip, basis unchanged
                self.status[q] = AT_HI if self.status[q] == AT_LO else AT_LO
                self.x[q] = self.hi[q] if self.status[q] == AT_HI else self.lo[q]
                self.pivots += 1
                continue
            if not np.isfinite(t):
                if phase1:
                    return Status.INFEASIBLE
                return Status.UNBOUNDED
            # progress is measured on the objective so that tiny numerical
            # steps still count as stalling
            degenerate = degenerate + 1 if t * abs(d[q]) <= 1e-12 else 0
            leaving = self.basis[r]
            enter_val = self.x[q] + sigma * t
            self.status[leaving] = AT_LO if target == 0 else AT_HI
            self.x[leaving] = self.lo[leaving] if target == 0 else self.hi[leaving]
            if not np.isfinite(self.x[leaving]):
                self.status[leaving] = FREE
                self.x[leaving] = 0.0
            self.x[q] = enter_val
            self._pivot(r, q, col)

    def _ratio(self, xb, lb, ub, rate, below, above, bland):
        ftol = self.tol.feasibility
        # relative pivot tolerance: tiny entries next to large ones wreck the basis
        ptol = max(self.tol.pivot, 1e-6 * float(np.max(np.abs(rate), initial=0.0)))
        dec = rate < -ptol
        inc = rate > ptol
        # decreasing basics block at lb (or at ub first when currently above it)
        dec_blk = dec & ~below
        inc_blk = inc & ~above
        tgt_val = np.full(xb.shape, np.nan)
        tgt_side = np.zeros(xb.shape, dtype=int)  # 0 -> lower, 1 -> upper
        m1 = dec_blk & above
        tgt_val[m1] = ub[m1]
        tgt_side[m1] = 1
        m2 = dec_blk & ~above
        tgt_val[m2] = lb[m2]
        m3 = inc_blk & below
        tgt_val[m3] = lb[m3]
        m4 = inc_blk & ~below
        tgt_val[m4] = ub[m4]
        tgt_side[m4] = 1
        ok = (dec_blk | inc_blk) & np.isfinite(tgt_val)
        if not ok.any():
            return np.inf, -1, 0
        idx = np.flatnonzero(ok)
        rr = rate[idx]
        dist = tgt_val[idx] - xb[idx]
        t_exact = np.maximum(dist / rr, 0.0)
        if bland:
            tmin = t_exact.min()
            ties = idx[t_exact <= tmin + 1e-12]
            r = int(ties[np.argmin(self.basis[ties])])
            return float(tmin), r, int(tgt_side[r])
        # Harris two-pass
        relax = np.where(rr > 0, ftol, -ftol)
        t_relax = np.maximum((dist + relax) / rr, 0.0)
        tmax = t_relax.min()
        sel = t_exact <= tmax
        j = int(np.argmax(np.where(sel, np.abs(rr), -1.0)))
        r = int(idx[j])
        return float(t_exact[j]), r, int(tgt_side[r])

    # dual simplex

    def dual(self, max_pivots=None) -> Status | None:
        """Dual simplex from a dual-feasible basis.

        Returns None if the starting basis is not dual feasible, leaving
        the caller to fall back on the primal method.
        """
        tol = self.tol
        ftol, dtol, ptol = tol.feasibility, tol.reduced_cost, tol.pivot
        limit = tol.max_pivots if max_pivots is None else max_pivots
        start = self.pivots
        first = True
        degenerate = 0
        bland = False
        while True:
            if self.pivots - start >= limit:
                return Status.ITERATION_LIMIT
            xb = self.basic_values()
            lb, ub = self.lo[self.basis], self.hi[self.basis]
            viol = np.maximum(lb - xb, xb - ub)
            r = int(np.argmax(viol))
            y = self.c[self.basis] @ self.Binv
            d = self.c - y @ self.M
            st = self.status
            movable = self.lo < self.hi
            if first:
                bad = movable & (((st == AT_LO) & (d < -1e-7)) | ((st == AT_HI) & (d > 1e-7))
                                 | ((st == FREE) & (np.abs(d) > 1e-7)))
                if bad.any():
                    return None
                first = False
            if viol[r] <= ftol:
                return Status.OPTIMAL
            bland = bland or degenerate >= 50
            if bland:
                rows = np.flatnonzero(viol > ftol)
                r = int(rows[np.argmin(self.basis[rows])])
            go_up = xb[r] < lb[r]
            alpha = self.Binv[r] @ self.M
            ptol = max(tol.pivot, 1e-6 * float(np.max(np.abs(alpha[movable]), initial=0.0)))
            if go_up:
                elig = ((st == AT_LO) & (alpha < -ptol)) | ((st == AT_HI) & (alpha > ptol))
            else:
                elig = ((st == AT_LO) & (alpha > ptol)) | ((st == AT_HI) & (alpha < -ptol))
            elig |= (st == FREE) & (np.abs(alpha) > ptol)
            elig &= movable
            if not elig.any():
                return Status.INFEASIBLE
            idx = np.flatnonzero(elig)
            ratio = np.abs(d[idx]) / np.abs(alpha[idx])
            rmin = ratio.min()
            ties = ratio <= rmin + dtol
            if bland:
                j = int(np.flatnonzero(ties)[0])
            else:
                j = int(np.argmax(np.where(ties, np.abs(alpha[idx]), -1.0)))
            q = int(idx[j])
            degenerate = degenerate + 1 if rmin <= 1e-12 else 0
            col = self.Binv @ self.M[:, q]
            leaving = self.basis[r]
            if go_up:
                self.status[leaving] = AT_LO
                self.x[leaving] = self.lo[leaving]
            else:
                self.status[leaving] = AT_HI
                self.x[leaving] = self.hi[leaving]
            self._pivot(r, q, col)

    def optimize(self, warm: bool = False) -> Status:
        if warm:
            # the dual method has no anti-cycling rule; if it stalls, the
            # primal method (which switches to Bland's rule) takes over
            st = self.dual(max_pivots=max(1000, 5 * self.m))
            if st is Status.INFEASIBLE:
                return st
        return self.primal()
