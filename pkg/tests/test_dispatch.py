import math

import numpy as np
import pytest

from fleetsim.config import PatternSearchConfig, ROLE_ATTACKER, ROLE_DEFENDER
from fleetsim.dispatch import (
    DispatchDecision,
    DispatchError,
    build_feasibility_corpus,
    build_success_corpus,
    decide_dispatch,
    feasibility_features,
    optimize_order,
    stochastic_stage_order,
    success_features,
)


class TestFeasibilityCorpus:
    def _sample(self, order, dispatched):
        feat = np.concatenate([order, np.zeros(4)])
        return (np.array(order, dtype=float), np.array(dispatched, dtype=float),
                feat)

    def test_dominating_dispatch_is_feasible(self):
        X, y = build_feasibility_corpus([
            self._sample([10, 10, 10], [12, 10, 11])])
        assert y.tolist() == [1.0]

    def test_any_shortfall_is_infeasible(self):
        X, y = build_feasibility_corpus([
            self._sample([10, 10, 10], [12, 9, 11])])
        assert y.tolist() == [0.0]

    def test_zero_order_is_vacuously_feasible(self):
        X, y = build_feasibility_corpus([self._sample([0, 0, 0], [0, 0, 0])])
        assert y.tolist() == [1.0]

    def test_empty_corpus(self):
        X, y = build_feasibility_corpus([])
        assert X.shape[0] == 0 and y.shape[0] == 0


class TestSuccessCorpus:
    def test_labels_pass_through(self):
        X, y = build_success_corpus([(np.zeros(5), 1.0), (np.ones(5), 0.0)])
        assert y.tolist() == [1.0, 0.0]
        assert X.shape == (2, 5)


def grid_search_oracle(objective, demand, step=0.25, factor=2.0):
    """Exhaustive scan of the firepower axis; other coordinates at the start."""
    best_x, best_v = None, np.inf
    f = 0.0
    while f <= demand[0] * factor:
        x = np.array([f, demand[1], demand[2]])
        v = objective(x)
        if v < best_v - 1e-12:
            best_v, best_x = v, x
        f += step
    return best_x, best_v


class TestOptimizeOrder:
    PARAMS = PatternSearchConfig(initial_mesh_fraction=0.25, final_mesh=0.25,
                                 max_evaluations=400)

    def test_threshold_stub_lands_just_above_the_step(self):
        """Success flips on at 40 firepower; the search must stop within one
        final mesh above it (the grid oracle confirms 40 is the optimum)."""
        def objective(x):
            return 0.0 if x[0] >= 40.0 else 1.0

        demand = np.array([32.0, 10.0, 10.0])
        result, value = optimize_order(objective, demand, self.PARAMS)
        oracle_x, oracle_v = grid_search_oracle(objective, demand)
        assert value == oracle_v == 0.0
        assert 40.0 <= result[0] <= 40.0 + self.PARAMS.final_mesh

    def test_flat_objective_returns_the_start(self):
        demand = np.array([30.0, 50.0, 40.0])
        result, value = optimize_order(lambda x: 0.0, demand, self.PARAMS)
        np.testing.assert_array_equal(result, demand)

    def test_quadratic_converges_to_its_minimum(self):
        def objective(x):
            return (x[0] - 3.0) ** 2

        start = np.array([8.0, 0.0, 0.0])
        result, _ = optimize_order(objective, start, self.PARAMS)
        assert abs(result[0] - 3.0) <= self.PARAMS.final_mesh

    def test_never_returns_negative_coordinates(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            target = rng.uniform(-50, 50, 3)

            def objective(x):
                return float(((x - target) ** 2).sum())

            start = np.abs(rng.normal(30, 20, 3))
            result, _ = optimize_order(objective, start, self.PARAMS)
            assert (result >= 0).all()

    def test_monotone_in_the_stub_threshold(self):
        """Raising the success threshold never lowers the returned firepower."""
        demand = np.array([32.0, 10.0, 10.0])
        previous = -1.0
        for threshold in np.linspace(2.0, 40.0, 20):
            def objective(x, th=threshold):
                return 0.0 if x[0] >= th else 1.0

            result, _ = optimize_order(objective, demand, self.PARAMS)
            assert result[0] >= previous - 1e-9
            previous = result[0]

    def test_respects_the_evaluation_budget(self):
        calls = {"n": 0}

        def objective(x):
            calls["n"] += 1
            return float(np.sin(x).sum())

        optimize_order(objective, np.array([30.0, 50.0, 40.0]), self.PARAMS)
        assert calls["n"] <= self.PARAMS.max_evaluations


class TestDecideDispatch:
    def test_high_failure_gives_up(self, default_config):
        decision = decide_dispatch(np.array([45.0, 75, 60]), 0.5, 0.4, 0.5,
                                   ROLE_DEFENDER, np.array([30.0, 50, 40]),
                                   default_config)
        assert decision.gave_up
        assert not decision.order.any()
        assert decision.strategy == 1

    def test_tolerable_failure_dispatches(self, default_config):
        decision = decide_dispatch(np.array([45.0, 75, 60]), 0.95, 0.95, 0.5,
                                   ROLE_DEFENDER, np.array([30.0, 50, 40]),
                                   default_config)
        assert not decision.gave_up
        assert decision.strategy == 2

    def test_boundary_failure_rate_still_dispatches(self, default_config):
        decision = decide_dispatch(np.array([45.0, 0, 0]), 1.0, 0.5, 0.5,
                                   ROLE_ATTACKER, np.array([30.0, 50, 40]),
                                   default_config)
        assert not decision.gave_up
        assert decision.p_win == pytest.approx(0.5)

    def test_win_probability_is_the_product(self, default_config):
        decision = decide_dispatch(np.array([45.0, 0, 0]), 0.8, 0.7, 0.9,
                                   ROLE_ATTACKER, np.array([30.0, 50, 40]),
                                   default_config)
        assert decision.p_win == pytest.approx(0.8 * 0.7, abs=1e-12)

    def test_giveup_decision_cannot_carry_an_order(self):
        with pytest.raises(DispatchError):
            DispatchDecision(order=np.ones(3), gave_up=True)


class TestStochasticStageOrder:
    def test_reproducible_sequence(self, default_config):
        seqs = []
        for _ in range(2):
            rng = np.random.default_rng(5)
            seqs.append([stochastic_stage_order(rng, ROLE_ATTACKER,
                                                np.array([30.0, 50, 40]),
                                                default_config).strategy
                         for _ in range(50)])
        assert seqs[0] == seqs[1]

    def test_uniform_band_frequencies(self, default_config):
        rng = np.random.default_rng(6)
        counts = np.zeros(11)
        n = 10_000
        demand = np.array([30.0, 50, 40])
        for _ in range(n):
            decision = stochastic_stage_order(rng, ROLE_ATTACKER, demand,
                                              default_config)
            counts[decision.strategy] += 1
        sigma = math.sqrt(n * 0.1 * 0.9)
        for band in range(1, 11):
            assert abs(counts[band] - n * 0.1) <= 3 * sigma

    def test_defender_giveup_band_is_a_zero_order(self, default_config):
        rng = np.random.default_rng(7)
        demand = np.array([30.0, 50, 40])
        seen_giveup = False
        for _ in range(100):
            decision = stochastic_stage_order(rng, ROLE_DEFENDER, demand,
                                              default_config)
            if decision.gave_up:
                seen_giveup = True
                assert not decision.order.any()
                assert decision.strategy == 1
        assert seen_giveup

    def test_attacker_orders_firepower_only(self, default_config):
        rng = np.random.default_rng(8)
        demand = np.array([30.0, 50, 40])
        for _ in range(50):
            decision = stochastic_stage_order(rng, ROLE_ATTACKER, demand,
                                              default_config)
            assert decision.order[1] == 0.0 and decision.order[2] == 0.0


class TestFeatureLayouts:
    def test_feasibility_feature_vector_shape(self):
        order = np.ones(3)
        stocks = np.ones(11)
        deltas = np.zeros((12, 11))
        dmatrix = np.zeros((3, 12))
        feats = feasibility_features(order, stocks, deltas, dmatrix)
        assert feats.shape == (3 + 11 + 132 + 36,)

    def test_success_feature_vector_shape(self):
        feats = success_features(np.ones(3), np.ones(3), np.zeros((3, 12)))
        assert feats.shape == (42,)
