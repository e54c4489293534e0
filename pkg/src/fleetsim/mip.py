"""Mixed-integer linear solver: branch and bound over LP relaxations.

Root relaxations get rounds of Gomory mixed-integer cuts before branching.
Branching picks the most-fractional integer variable (ties to the lowest
index) and explores the lower branch first, depth first. Budgets are counted
in nodes and simplex iterations so identical inputs always take the identical
path; a wall-clock limit can be layered on top but is off by default.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .simplex import (
    RULE_DANTZIG,
    STATUS_INFEASIBLE,
    STATUS_ITERATION_LIMIT,
    STATUS_OPTIMAL,
    LpResult,
    solve_lp,
)

INT_TOL = 1e-6
PRUNE_TOL = 1e-9
GMI_MIN_FRACTION = 1e-4


class MipError(ValueError):
    pass


@dataclass
class MipProblem:
    """min c.x + offset s.t. A_eq x = b_eq, A_ub x <= b_ub, lb <= x <= ub,
    x[integer_mask] integer."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    integer_mask: np.ndarray = None
    objective_offset: float = 0.0
    names: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def validate(self) -> None:
        n = self.n_vars
        if self.lb is None or self.ub is None or self.integer_mask is None:
            raise MipError("bounds and integrality mask are required")
        if self.lb.shape[0] != n or self.ub.shape[0] != n or self.integer_mask.shape[0] != n:
            raise MipError("bounds and mask must match the variable count")
        if not np.isfinite(self.lb).all() or not np.isfinite(self.ub).all():
            raise MipError("every variable needs finite bounds")
        if (self.lb > self.ub).any():
            raise MipError("lower bounds must not exceed upper bounds")
        for A, b, tag in ((self.A_ub, self.b_ub, "A_ub"), (self.A_eq, self.b_eq, "A_eq")):
            if A is None:
                continue
            if A.shape[1] != n or A.shape[0] != b.shape[0]:
                raise MipError(f"{tag} dimensions are inconsistent")


@dataclass
class MipSolution:
    x: np.ndarray
    objective: float
    status: str                  # "optimal" | "budget_limited" | "infeasible"
    nodes: int
    cuts: int
    lp_iterations: int

    def recomputed_objective(self, problem: MipProblem) -> float:
        return float(problem.c @ self.x) + problem.objective_offset


@dataclass
class SolveBudget:
    max_nodes: int = 50_000
    max_lp_iterations: int = 2_000_000
    wall_time_limit: float | None = None


def _solve_relaxation(problem: MipProblem, lb, ub, cut_rows, cut_rhs,
                      iter_budget: int) -> LpResult:
    A_ub, b_ub = problem.A_ub, problem.b_ub
    if cut_rows is not None and len(cut_rows):
        extra = np.asarray(cut_rows)
        extra_rhs = np.asarray(cut_rhs)
        if A_ub is None:
            A_ub, b_ub = extra, extra_rhs
        else:
            A_ub = np.vstack([A_ub, extra])
            b_ub = np.concatenate([b_ub, extra_rhs])
    return solve_lp(problem.c, A_eq=problem.A_eq, b_eq=problem.b_eq,
                    A_ub=A_ub, b_ub=b_ub, lb=lb, ub=ub,
                    rule=RULE_DANTZIG, max_iter=max(1000, iter_budget))


def _prepared_form(problem: MipProblem, cut_rows, cut_rhs):
    from .simplex import standard_form
    A_ub, b_ub = problem.A_ub, problem.b_ub
    if cut_rows is not None and len(cut_rows):
        extra = np.asarray(cut_rows)
        extra_rhs = np.asarray(cut_rhs)
        if A_ub is None:
            A_ub, b_ub = extra, extra_rhs
        else:
            A_ub = np.vstack([A_ub, extra])
            b_ub = np.concatenate([b_ub, extra_rhs])
    return standard_form(problem.c, problem.A_eq, problem.b_eq, A_ub, b_ub)


def _solve_node(problem: MipProblem, form, lb, ub, iter_budget: int) -> LpResult:
    if form is None:
        return _solve_relaxation(problem, lb, ub, None, None, iter_budget)
    from .simplex import solve_prepared
    return solve_prepared(form, lb, ub, rule=RULE_DANTZIG,
                          max_iter=max(1000, iter_budget))


def _fractional_int_vars(x: np.ndarray, integer_mask: np.ndarray) -> np.ndarray:
    frac = np.abs(x - np.round(x))
    frac[~integer_mask] = 0.0
    return np.flatnonzero(frac > INT_TOL)


def gomory_cuts(res: LpResult, integer_mask: np.ndarray,
                aug_A_ub: np.ndarray | None, aug_b_ub: np.ndarray | None,
                max_cuts: int) -> tuple[list[np.ndarray], list[float]]:
    """Gomory mixed-integer cuts from fractional integer basics.

    Each tableau row whose basic variable is integer-constrained but
    fractional yields one cut over the structural variables. Nonbasics at an
    upper bound are complemented; slack contributions are substituted back
    through their defining inequality rows (including earlier cut rows, hence
    the augmented matrix).
    """
    if res.tableau is None:
        return [], []
    T, basis = res.tableau, res.basis
    lb, ub = res.lb, res.ub
    n_struct = res.n_structural
    m = T.shape[0]
    n_slack = 0 if aug_A_ub is None else aug_A_ub.shape[0]
    n_cols = n_struct + n_slack          # structural + slacks, no artificials

    basic_set = {int(basis[i]) for i in range(m)}
    cuts: list[np.ndarray] = []
    rhs: list[float] = []

    for i in range(m):
        bi = int(basis[i])
        if bi >= n_struct or not integer_mask[bi]:
            continue
        beta = float(res.x[bi])
        f0 = beta - math.floor(beta)
        if f0 < GMI_MIN_FRACTION or f0 > 1.0 - GMI_MIN_FRACTION:
            continue
        gamma = np.zeros(n_cols)
        const = f0
        ok = True
        for j in range(n_cols):
            if j == bi or j in basic_set:
                continue
            a = float(T[i, j])
            if a == 0.0:
                continue
            # Nonbasic structural variables sit on a bound; slacks sit at 0.
            at_ub = False
            if j < n_struct and np.isfinite(ub[j]):
                at_ub = abs(float(res.x[j]) - ub[j]) < 1e-7 and ub[j] > lb[j] + 1e-12
            a_sh = -a if at_ub else a
            if j < n_struct and integer_mask[j]:
                fj = a_sh - math.floor(a_sh)
                g = fj if fj <= f0 else f0 * (1.0 - fj) / (1.0 - f0)
            else:
                g = a_sh if a_sh >= 0 else f0 * (-a_sh) / (1.0 - f0)
            if not math.isfinite(g):
                ok = False
                break
            if at_ub:
                gamma[j] -= g
                const -= g * ub[j]
            else:
                gamma[j] += g
                const += g * lb[j]
        if not ok:
            continue
        # gamma . (x, s) >= const; substitute s_k = b_k - A_k x.
        coef = gamma[:n_struct].copy()
        c_rhs = const
        slack_part = gamma[n_struct:]
        for k in np.flatnonzero(slack_part):
            g = slack_part[k]
            coef -= g * aug_A_ub[k]
            c_rhs -= g * aug_b_ub[k]
        norm = np.max(np.abs(coef)) if coef.any() else 0.0
        if norm < 1e-9 or norm > 1e9:
            continue
        # coef . x >= c_rhs  ->  -coef . x <= -c_rhs
        cuts.append(-coef)
        rhs.append(-c_rhs)
        if len(cuts) >= max_cuts:
            break
    return cuts, rhs


def solve_mip(problem: MipProblem, budget: SolveBudget | None = None,
              gomory_rounds: int = 2, gomory_max_cuts: int = 24,
              branch_up_first: bool = False) -> MipSolution:
    """Branch and bound with root Gomory cuts. Deterministic given inputs.

    ``branch_up_first`` explores the ceil branch before the floor branch;
    useful for covering-style objectives where rounding up yields good
    incumbents early.
    """
    problem.validate()
    budget = budget or SolveBudget()
    start = time.perf_counter()
    integer_mask = problem.integer_mask.astype(bool)

    nodes = 0
    lp_iters = 0
    cuts_added = 0
    cut_rows: list[np.ndarray] = []
    cut_rhs: list[float] = []

    def out_of_budget() -> bool:
        if nodes >= budget.max_nodes or lp_iters >= budget.max_lp_iterations:
            return True
        if budget.wall_time_limit is not None and \
           time.perf_counter() - start > budget.wall_time_limit:
            return True
        return False

    # Root solve plus cutting rounds.
    res = _solve_relaxation(problem, problem.lb, problem.ub, None, None,
                            budget.max_lp_iterations)
    lp_iters += res.iterations
    nodes += 1
    if res.status == STATUS_INFEASIBLE:
        return MipSolution(np.zeros(problem.n_vars), math.inf, "infeasible",
                           nodes, 0, lp_iters)
    if res.status not in (STATUS_OPTIMAL, STATUS_ITERATION_LIMIT):
        raise MipError(f"relaxation failed with simplex status {res.status}")

    for _ in range(gomory_rounds):
        if res.status != STATUS_OPTIMAL or out_of_budget():
            break
        if not len(_fractional_int_vars(res.x, integer_mask)):
            break
        if cut_rows:
            aug_A = np.vstack([problem.A_ub, np.asarray(cut_rows)]) \
                if problem.A_ub is not None else np.asarray(cut_rows)
            aug_b = np.concatenate([problem.b_ub, np.asarray(cut_rhs)]) \
                if problem.b_ub is not None else np.asarray(cut_rhs)
        else:
            aug_A, aug_b = problem.A_ub, problem.b_ub
        new_cuts, new_rhs = gomory_cuts(res, integer_mask, aug_A, aug_b,
                                        gomory_max_cuts - cuts_added)
        if not new_cuts:
            break
        cut_rows += new_cuts
        cut_rhs += new_rhs
        cuts_added += len(new_cuts)
        res = _solve_relaxation(problem, problem.lb, problem.ub, cut_rows,
                                cut_rhs, budget.max_lp_iterations - lp_iters)
        lp_iters += res.iterations
        if res.status == STATUS_INFEASIBLE:
            # A bad cut would be a bug; cuts are validated in tests. Treat a
            # numerically infeasible cut system as "no cuts".
            cut_rows, cut_rhs, cuts_added = [], [], 0
            res = _solve_relaxation(problem, problem.lb, problem.ub, None,
                                    None, budget.max_lp_iterations - lp_iters)
            lp_iters += res.iterations
            break

    best_x = None
    best_obj = math.inf
    exhausted = False

    # The equality system is fixed from here on; nodes only move bounds.
    form = _prepared_form(problem, cut_rows, cut_rhs)

    # Stack entries carry the parent relaxation bound so subtrees that cannot
    # improve on the incumbent are pruned without a solve.
    stack: list[tuple[np.ndarray, np.ndarray, LpResult | None, float]] = [
        (problem.lb.copy(), problem.ub.copy(), res, -math.inf)]
    while stack:
        if out_of_budget():
            exhausted = True
            break
        lb, ub, cached, parent_bound = stack.pop()
        if parent_bound >= best_obj - PRUNE_TOL:
            continue
        if cached is None:
            node_res = _solve_node(problem, form, lb, ub,
                                   budget.max_lp_iterations - lp_iters)
            lp_iters += node_res.iterations
            nodes += 1
        else:
            node_res = cached
        if node_res.status == STATUS_INFEASIBLE:
            continue
        if node_res.status == STATUS_ITERATION_LIMIT:
            exhausted = True
            continue
        if node_res.objective >= best_obj - PRUNE_TOL:
            continue
        frac = _fractional_int_vars(node_res.x, integer_mask)
        if not len(frac):
            x = node_res.x.copy()
            x[integer_mask] = np.round(x[integer_mask])
            obj = float(problem.c @ x)
            if obj < best_obj - PRUNE_TOL:
                best_obj = obj
                best_x = x
            continue
        # Most fractional variable, ties to the lowest index.
        fractions = np.abs(node_res.x[frac] - np.round(node_res.x[frac]))
        distance = np.abs(fractions - 0.5)
        pick = frac[np.lexsort((frac, distance))[0]]
        value = node_res.x[pick]
        bound = node_res.objective
        lo_ub = ub.copy()
        lo_ub[pick] = math.floor(value)
        hi_lb = lb.copy()
        hi_lb[pick] = math.ceil(value)
        # The branch explored first is pushed last.
        if branch_up_first:
            stack.append((lb, lo_ub, None, bound))
            stack.append((hi_lb, ub, None, bound))
        else:
            stack.append((hi_lb, ub, None, bound))
            stack.append((lb, lo_ub, None, bound))

    if best_x is None:
        status = "budget_limited" if exhausted else "infeasible"
        return MipSolution(np.zeros(problem.n_vars), math.inf, status, nodes,
                           cuts_added, lp_iters)
    status = "budget_limited" if exhausted else "optimal"
    solution = MipSolution(best_x, best_obj + problem.objective_offset, status,
                           nodes, cuts_added, lp_iterations=lp_iters)
    check = solution.recomputed_objective(problem)
    if not math.isclose(check, solution.objective, rel_tol=1e-9, abs_tol=1e-6):
        raise MipError("objective self-check failed")
    return solution
