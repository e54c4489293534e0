"""Bounded-variable two-phase primal simplex.

Solves  min c.x  s.t.  A x = b,  lb <= x <= ub  on a dense tableau. Lower
bounds must be finite; upper bounds may be +inf. Pricing is Dantzig's rule
with an automatic, deterministic switch to Bland's rule after a run of
degenerate pivots, which keeps the method cycling-proof; pure Bland pricing
is available via ``rule=0``.

The numba-compiled kernel returns the final tableau and basis so callers can
derive cutting planes from it.
"""
from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_UNBOUNDED = 2
STATUS_ITERATION_LIMIT = 3

RULE_BLAND = 0
RULE_DANTZIG = 1

_TOL_COST = 1e-9
_TOL_PIVOT = 1e-10
_TOL_FEAS = 1e-7


@njit(cache=True)
def _choose_entering(d, x, lb, ub, enterable, in_basis, bland):
    n_total = d.shape[0]
    best = -1
    best_score = _TOL_COST
    for j in range(n_total):
        if not enterable[j] or in_basis[j] or ub[j] - lb[j] <= _TOL_PIVOT:
            continue
        at_lb = x[j] <= lb[j] + _TOL_FEAS
        score = 0.0
        if at_lb and d[j] < -_TOL_COST:
            score = -d[j]
        elif not at_lb and d[j] > _TOL_COST:
            score = d[j]
        if score > 0.0:
            if bland:
                return j
            if score > best_score:
                best_score = score
                best = j
    return best


@njit(cache=True)
def _simplex_phase(T, basis, x, d, lb, ub, enterable, in_basis, rule, max_iter):
    """Run pivots until optimal for the current reduced costs.

    Returns (status, iterations). T, basis, x, d, in_basis update in place.
    """
    m, n_total = T.shape
    iters = 0
    degenerate_run = 0
    bland_mode = rule == RULE_BLAND
    while True:
        if iters >= max_iter:
            return STATUS_ITERATION_LIMIT, iters
        j = _choose_entering(d, x, lb, ub, enterable, in_basis, bland_mode)
        if j < 0:
            return STATUS_OPTIMAL, iters
        direction = 1.0 if x[j] <= lb[j] + _TOL_FEAS else -1.0

        # Ratio test: smallest displacement before a basic variable hits a
        # bound; ties to the smallest basic index. A full bound flip of the
        # entering variable caps the step.
        flip_limit = ub[j] - lb[j]
        row_limit = np.inf
        leave = -1
        leave_to_ub = False
        for i in range(m):
            coef = direction * T[i, j]
            bi = basis[i]
            if coef > _TOL_PIVOT:
                room = (x[bi] - lb[bi]) / coef
                to_ub = False
            elif coef < -_TOL_PIVOT:
                if ub[bi] == np.inf:
                    continue
                room = (ub[bi] - x[bi]) / (-coef)
                to_ub = True
            else:
                continue
            if room < 0.0:
                room = 0.0
            if room < row_limit - _TOL_PIVOT or \
               (room <= row_limit + _TOL_PIVOT and leave >= 0 and bi < basis[leave]):
                row_limit = room
                leave = i
                leave_to_ub = to_ub
        step = row_limit if row_limit <= flip_limit else flip_limit
        if step == np.inf:
            return STATUS_UNBOUNDED, iters
        do_pivot = leave >= 0 and row_limit <= flip_limit

        if step <= _TOL_PIVOT:
            degenerate_run += 1
            if rule != RULE_BLAND and degenerate_run > 2 * m + 10:
                bland_mode = True
        else:
            degenerate_run = 0
            if rule != RULE_BLAND:
                bland_mode = False

        x[j] += direction * step
        for i in range(m):
            x[basis[i]] -= direction * T[i, j] * step

        if not do_pivot:
            # Bound flip: entering variable lands on its other bound.
            x[j] = ub[j] if direction > 0 else lb[j]
        else:
            out = basis[leave]
            x[out] = ub[out] if leave_to_ub else lb[out]
            in_basis[out] = False
            piv = T[leave, j]
            inv = 1.0 / piv
            for col in range(n_total):
                T[leave, col] *= inv
            for i in range(m):
                if i != leave:
                    f = T[i, j]
                    if f != 0.0:
                        for col in range(n_total):
                            T[i, col] -= f * T[leave, col]
            dj = d[j]
            if dj != 0.0:
                for col in range(n_total):
                    d[col] -= dj * T[leave, col]
            basis[leave] = j
            in_basis[j] = True
        iters += 1


@njit(cache=True)
def _reduced_costs(T, basis, c_full):
    m, n_total = T.shape
    d = c_full.copy()
    for i in range(m):
        cb = c_full[basis[i]]
        if cb != 0.0:
            for col in range(n_total):
                d[col] -= cb * T[i, col]
    return d


@njit(cache=True)
def _simplex_kernel(A, b, c, lb_in, ub_in, slack_col, rule, max_iter):
    """Two-phase bounded simplex. Returns
    (status, x_full, obj, iters, T, basis, lb, ub)."""
    m, n = A.shape
    n_total = n + m

    T = np.zeros((m, n_total))
    lb = np.zeros(n_total)
    ub = np.zeros(n_total)
    lb[:n] = lb_in
    ub[:n] = ub_in

    x = np.zeros(n_total)
    for j in range(n):
        x[j] = lb[j]

    basis = np.empty(m, dtype=np.int64)
    in_basis = np.zeros(n_total, dtype=np.bool_)
    enterable = np.ones(n_total, dtype=np.bool_)
    n_art = 0

    # Crash basis: a row whose slack can absorb the residual needs no
    # artificial; other rows get one, sign-adjusted to start >= 0.
    for i in range(m):
        r = b[i]
        for j in range(n):
            r -= A[i, j] * x[j]
        sc = slack_col[i]
        if sc >= 0 and r >= 0.0:
            for j in range(n):
                T[i, j] = A[i, j]
            basis[i] = sc
            in_basis[sc] = True
            x[sc] = r
            ub[n + i] = 0.0
            enterable[n + i] = False
        else:
            sign = 1.0 if r >= 0.0 else -1.0
            for j in range(n):
                T[i, j] = sign * A[i, j]
            T[i, n + i] = 1.0
            basis[i] = n + i
            in_basis[n + i] = True
            x[n + i] = sign * r
            ub[n + i] = np.inf
            enterable[n + i] = False
            n_art += 1

    iters_total = 0
    if n_art > 0:
        # Phase 1: minimize the artificial sum.
        c1 = np.zeros(n_total)
        for i in range(m):
            if basis[i] == n + i:
                c1[n + i] = 1.0
        d = _reduced_costs(T, basis, c1)
        status, it1 = _simplex_phase(T, basis, x, d, lb, ub, enterable,
                                     in_basis, rule, max_iter)
        iters_total += it1
        if status == STATUS_ITERATION_LIMIT:
            return STATUS_ITERATION_LIMIT, x, 0.0, iters_total, T, basis, lb, ub
        art_sum = 0.0
        for i in range(m):
            art_sum += x[n + i]
        if art_sum > 1e-6:
            return STATUS_INFEASIBLE, x, 0.0, iters_total, T, basis, lb, ub

    # Drive surviving artificials out of the basis where possible.
    for i in range(m):
        if basis[i] >= n:
            piv_col = -1
            for j in range(n):
                if abs(T[i, j]) > 1e-8:
                    piv_col = j
                    break
            if piv_col >= 0:
                piv = T[i, piv_col]
                invp = 1.0 / piv
                for col in range(n_total):
                    T[i, col] *= invp
                for r2 in range(m):
                    if r2 != i:
                        f = T[r2, piv_col]
                        if f != 0.0:
                            for col in range(n_total):
                                T[r2, col] -= f * T[i, col]
                # Degenerate swap: the artificial sits at zero, so no value
                # moves; the entering column keeps its current bound value.
                old = basis[i]
                basis[i] = piv_col
                in_basis[old] = False
                in_basis[piv_col] = True
                x[old] = 0.0
            else:
                # Redundant row: pin the artificial at zero.
                lb[basis[i]] = 0.0
                ub[basis[i]] = 0.0

    # Phase 2 on the true objective.
    c_full = np.zeros(n_total)
    for j in range(n):
        c_full[j] = c[j]
    d = _reduced_costs(T, basis, c_full)
    status, it2 = _simplex_phase(T, basis, x, d, lb, ub, enterable, in_basis,
                                 rule, max_iter - iters_total)
    iters_total += it2
    obj = 0.0
    for j in range(n):
        obj += c[j] * x[j]
    return status, x, obj, iters_total, T, basis, lb, ub


class LpResult:
    __slots__ = ("status", "x", "objective", "iterations", "tableau", "basis",
                 "n_structural", "lb", "ub")

    def __init__(self, status, x, objective, iterations, tableau, basis,
                 n_structural, lb, ub):
        self.status = status
        self.x = x
        self.objective = objective
        self.iterations = iterations
        self.tableau = tableau
        self.basis = basis
        self.n_structural = n_structural
        self.lb = lb
        self.ub = ub


class StandardForm:
    """Equality-form data (slacks appended) reusable across bound changes."""

    __slots__ = ("A", "b", "c", "slack_col", "n_structural", "n_slack")

    def __init__(self, A, b, c, slack_col, n_structural, n_slack):
        self.A = A
        self.b = b
        self.c = c
        self.slack_col = slack_col
        self.n_structural = n_structural
        self.n_slack = n_slack


def standard_form(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None) -> StandardForm | None:
    """Assemble the equality system once; bounds vary per solve."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    rows = []
    rhs = []
    n_slack = 0
    if A_eq is not None and len(A_eq):
        rows.append(np.asarray(A_eq, dtype=np.float64))
        rhs.append(np.asarray(b_eq, dtype=np.float64))
    if A_ub is not None and len(A_ub):
        A_ub = np.asarray(A_ub, dtype=np.float64)
        n_slack = A_ub.shape[0]
        rows.append(A_ub)
        rhs.append(np.asarray(b_ub, dtype=np.float64))
    if not rows:
        return None
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]
    slack_col = np.full(m, -1, dtype=np.int64)
    if n_slack:
        S = np.zeros((m, n_slack))
        eq_rows = m - n_slack
        for i in range(n_slack):
            S[eq_rows + i, i] = 1.0
            slack_col[eq_rows + i] = n + i
        A = np.hstack([A, S])
        c = np.concatenate([c, np.zeros(n_slack)])
    return StandardForm(np.ascontiguousarray(A), np.ascontiguousarray(b),
                        np.ascontiguousarray(c), slack_col, n, n_slack)


def solve_prepared(form: StandardForm, lb, ub, rule: int = RULE_DANTZIG,
                   max_iter: int = 200_000) -> LpResult:
    """Solve a prepared form under the given structural bounds."""
    n = form.n_structural
    lb_ext = np.empty(n + form.n_slack)
    ub_ext = np.empty(n + form.n_slack)
    lb_ext[:n] = lb
    ub_ext[:n] = ub
    lb_ext[n:] = 0.0
    ub_ext[n:] = np.inf
    if not np.isfinite(lb_ext).all():
        raise ValueError("lower bounds must be finite")
    status, x_full, obj, iters, T, basis, lb_k, ub_k = _simplex_kernel(
        form.A, form.b, form.c, lb_ext, ub_ext, form.slack_col, rule, max_iter)
    return LpResult(int(status), x_full[:n], float(obj), int(iters), T,
                    basis, n, lb_k, ub_k)


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, lb=None, ub=None,
             rule: int = RULE_DANTZIG, max_iter: int = 200_000) -> LpResult:
    """Solve min c.x with optional equality and <= rows plus variable bounds.

    Inequalities receive slack columns internally; the reported solution and
    tableau cover structural variables first, then slacks, then artificials.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=np.float64).copy()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=np.float64).copy()
    if not np.isfinite(lb).all():
        raise ValueError("lower bounds must be finite")

    form = standard_form(c, A_eq, b_eq, A_ub, b_ub)
    if form is None:
        # Pure bound minimization.
        x = np.where(c >= 0, lb, np.where(np.isfinite(ub), ub, np.nan))
        if np.isnan(x).any():
            return LpResult(STATUS_UNBOUNDED, np.zeros(n), -np.inf, 0, None,
                            None, n, lb, ub)
        return LpResult(STATUS_OPTIMAL, x, float(c @ x), 0, None, None, n, lb, ub)
    return solve_prepared(form, lb, ub, rule, max_iter)
