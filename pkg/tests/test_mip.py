import itertools

import numpy as np
import pytest

from fleetsim.mip import (
    MipError,
    MipProblem,
    SolveBudget,
    _fractional_int_vars,
    _solve_relaxation,
    gomory_cuts,
    solve_mip,
)


def random_instance(rng, n_max=6, bound_max=4, allow_continuous=False):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, 5))
    c = rng.integers(-10, 11, n).astype(float)
    A = rng.integers(-4, 5, (m, n)).astype(float)
    ub_val = int(rng.integers(1, bound_max + 1))
    lb = np.zeros(n)
    ub = np.full(n, float(ub_val))
    b = (A @ (ub * 0.5)) + rng.integers(-3, 6, m)
    mask = np.ones(n, dtype=bool)
    if allow_continuous:
        mask = rng.random(n) < 0.8
        if not mask.any():
            mask[0] = True
    return MipProblem(c=c, A_ub=A, b_ub=b.astype(float), lb=lb, ub=ub,
                      integer_mask=mask), ub_val


def enumerate_optimum(problem: MipProblem, ub_val: int):
    best = np.inf
    n = problem.n_vars
    for point in itertools.product(range(ub_val + 1), repeat=n):
        x = np.array(point, dtype=float)
        if problem.A_ub is not None and not (problem.A_ub @ x <= problem.b_ub + 1e-9).all():
            continue
        best = min(best, float(problem.c @ x))
    return best


class TestSolveMip:
    def test_lp_integral_instance_solves_at_root(self):
        # totally unimodular: interval constraints with integer rhs
        c = np.array([-1.0, -1.0, -1.0])
        A = np.array([[1.0, 1, 0], [0, 1, 1]])
        b = np.array([3.0, 4.0])
        prob = MipProblem(c=c, A_ub=A, b_ub=b, lb=np.zeros(3),
                          ub=np.full(3, 4.0), integer_mask=np.ones(3, bool))
        sol = solve_mip(prob)
        assert sol.status == "optimal"
        assert sol.nodes == 1

    def test_matches_enumeration_on_200_random_instances(self):
        rng = np.random.default_rng(123)
        for trial in range(200):
            prob, ub_val = random_instance(rng)
            sol = solve_mip(prob)
            best = enumerate_optimum(prob, ub_val)
            if not np.isfinite(best):
                assert sol.status == "infeasible", trial
            else:
                assert sol.status == "optimal", trial
                assert sol.objective == pytest.approx(best, abs=1e-6), trial

    def test_branch_direction_changes_path_not_answer(self):
        rng = np.random.default_rng(77)
        for _ in range(40):
            prob, ub_val = random_instance(rng)
            a = solve_mip(prob, branch_up_first=False)
            b = solve_mip(prob, branch_up_first=True)
            if a.status == "optimal" and b.status == "optimal":
                assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_knapsack_toy_matches_its_enumeration(self):
        """max x + 2y s.t. x + y <= 5, 2x + y <= 7 over non-negative integers;
        the expected value comes from the enumeration oracle, not a constant."""
        c = np.array([-1.0, -2.0])
        A = np.array([[1.0, 1.0], [2.0, 1.0]])
        b = np.array([5.0, 7.0])
        prob = MipProblem(c=c, A_ub=A, b_ub=b, lb=np.zeros(2),
                          ub=np.full(2, 10.0), integer_mask=np.ones(2, bool))
        sol = solve_mip(prob)
        oracle = min(float(c @ np.array(p))
                     for p in itertools.product(range(11), repeat=2)
                     if (A @ np.array(p) <= b).all())
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(oracle, abs=1e-12)

    def test_infeasible_instance_reported(self):
        prob = MipProblem(c=np.array([1.0]), A_ub=np.array([[1.0]]),
                          b_ub=np.array([-5.0]), lb=np.zeros(1),
                          ub=np.array([2.0]), integer_mask=np.ones(1, bool))
        sol = solve_mip(prob)
        assert sol.status == "infeasible"

    def test_budget_exhaustion_returns_incumbent(self):
        rng = np.random.default_rng(5)
        # larger instance so the tree cannot finish within one node
        n = 14
        c = -rng.uniform(1, 3, n).round(2)
        A = rng.uniform(0.2, 1.0, (6, n)).round(2)
        b = rng.uniform(2, 4, 6).round(2)
        prob = MipProblem(c=c, A_ub=A, b_ub=b, lb=np.zeros(n),
                          ub=np.full(n, 5.0), integer_mask=np.ones(n, bool))
        sol = solve_mip(prob, SolveBudget(max_nodes=3, max_lp_iterations=10**9))
        assert sol.status in ("budget_limited", "optimal")
        if sol.status == "budget_limited" and np.isfinite(sol.objective):
            # incumbent must be feasible
            assert (prob.A_ub @ sol.x <= prob.b_ub + 1e-6).all()

    def test_objective_self_check(self):
        rng = np.random.default_rng(9)
        prob, ub_val = random_instance(rng)
        sol = solve_mip(prob)
        if sol.status == "optimal":
            assert sol.recomputed_objective(prob) == pytest.approx(
                sol.objective, abs=1e-9)

    def test_solver_admissibility_against_all_feasible_points(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            prob, ub_val = random_instance(rng, n_max=4, bound_max=3)
            sol = solve_mip(prob)
            if sol.status != "optimal":
                continue
            for point in itertools.product(range(ub_val + 1), repeat=prob.n_vars):
                x = np.array(point, dtype=float)
                if (prob.A_ub @ x <= prob.b_ub + 1e-9).all():
                    assert sol.objective <= prob.c @ x + 1e-6

    def test_missing_bounds_rejected(self):
        prob = MipProblem(c=np.array([1.0]), lb=np.zeros(1),
                          ub=np.array([np.inf]), integer_mask=np.ones(1, bool))
        with pytest.raises(MipError):
            solve_mip(prob)

    def test_deterministic_given_inputs(self):
        rng = np.random.default_rng(15)
        prob, _ = random_instance(rng)
        a = solve_mip(prob)
        b = solve_mip(prob)
        assert a.nodes == b.nodes and a.lp_iterations == b.lp_iterations
        assert np.array_equal(a.x, b.x)


class TestGomoryCuts:
    def test_cuts_never_exclude_integer_feasible_points(self):
        rng = np.random.default_rng(5)
        produced = 0
        for trial in range(150):
            prob, ub_val = random_instance(rng, n_max=5, bound_max=4,
                                           allow_continuous=True)
            res = _solve_relaxation(prob, prob.lb, prob.ub, None, None, 100000)
            if res.status != 0:
                continue
            if not len(_fractional_int_vars(res.x, prob.integer_mask)):
                continue
            cuts, rhs = gomory_cuts(res, prob.integer_mask, prob.A_ub,
                                    prob.b_ub, 16)
            produced += len(cuts)
            grids = [range(ub_val + 1) if prob.integer_mask[j]
                     else np.linspace(0, ub_val, 5) for j in range(prob.n_vars)]
            for point in itertools.product(*grids):
                x = np.array(point, dtype=float)
                if (prob.A_ub @ x <= prob.b_ub + 1e-9).all():
                    for crow, cr in zip(cuts, rhs):
                        assert crow @ x <= cr + 1e-6, (trial, x)
        assert produced > 30

    def test_cuts_tighten_the_relaxation(self):
        rng = np.random.default_rng(21)
        improved = 0
        usable = 0
        for _ in range(60):
            prob, ub_val = random_instance(rng)
            root = _solve_relaxation(prob, prob.lb, prob.ub, None, None, 100000)
            if root.status != 0 or not len(
                    _fractional_int_vars(root.x, prob.integer_mask)):
                continue
            cuts, rhs = gomory_cuts(root, prob.integer_mask, prob.A_ub,
                                    prob.b_ub, 16)
            if not cuts:
                continue
            usable += 1
            recut = _solve_relaxation(prob, prob.lb, prob.ub, cuts, rhs, 100000)
            if recut.status == 0 and recut.objective > root.objective + 1e-9:
                improved += 1
        assert usable >= 10
        assert improved >= usable // 3
