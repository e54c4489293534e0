import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetsim.config import ROLE_ATTACKER, ROLE_DEFENDER
from fleetsim.domain import (
    Convoy,
    ConvoyVehicle,
    Demand,
    DomainError,
    accumulate_demand_matrix,
    attributes_of_convoy,
    classify_strategy,
    fresh_convoy,
    strategy_to_order,
)


def make_convoy(config, counts):
    return fresh_convoy(np.array(counts, dtype=np.int64), config)


class TestAttributesOfConvoy:
    def test_single_assault_matches_catalog(self, default_config):
        convoy = make_convoy(default_config, [0, 0, 1, 0, 0])
        attrs = attributes_of_convoy(convoy, default_config)
        assert attrs.tolist() == [8.0, 2.0, 0.0]

    def test_empty_convoy_is_zero(self, default_config):
        assert attributes_of_convoy(Convoy(), default_config).tolist() == [0, 0, 0]

    def test_mixed_convoy_is_the_hand_sum(self, default_config):
        # two scouts and one transport, rows summed by hand from the catalog
        convoy = make_convoy(default_config, [2, 0, 0, 1, 0])
        attrs = attributes_of_convoy(convoy, default_config)
        assert attrs.tolist() == [2.0, 6.0, 18.0]

    def test_damaged_vehicle_scales_by_healthy_fraction(self, default_config):
        convoy = make_convoy(default_config, [0, 0, 1, 0, 0])
        vehicle = convoy.vehicles[0]
        total = vehicle.total_components
        # damage two components of the assault vehicle
        moved = 0
        for i in range(len(vehicle.healthy)):
            while vehicle.healthy[i] > 0 and moved < 2:
                vehicle.healthy[i] -= 1
                vehicle.damaged[i] += 1
                moved += 1
        attrs = attributes_of_convoy(convoy, default_config, count_damaged=False)
        expected = np.array([8.0, 2.0, 0.0]) * (total - 2) / total
        np.testing.assert_allclose(attrs, expected)

    def test_unknown_vehicle_type_raises(self, default_config):
        bad = Convoy([ConvoyVehicle(vehicle_type=99,
                                    healthy=np.zeros(6, dtype=np.int64),
                                    damaged=np.zeros(6, dtype=np.int64))])
        with pytest.raises(DomainError):
            attributes_of_convoy(bad, default_config)

    def test_additive_over_union(self, default_config):
        c1 = make_convoy(default_config, [1, 0, 2, 0, 0])
        c2 = make_convoy(default_config, [0, 3, 0, 1, 1])
        union = Convoy(c1.vehicles + c2.vehicles)
        np.testing.assert_allclose(
            attributes_of_convoy(union, default_config),
            attributes_of_convoy(c1, default_config)
            + attributes_of_convoy(c2, default_config))


class TestStrategyToOrder:
    def test_defender_band_two_uses_caps(self, default_config):
        band = default_config.defender_strategies[1]
        order = strategy_to_order(band, np.array([30.0, 50.0, 40.0]))
        assert order.tolist() == [45.0, 75.0, 60.0]

    def test_attacker_band_one_orders_half_firepower(self, default_config):
        band = default_config.attacker_strategies[0]
        order = strategy_to_order(band, np.array([30.0, 50.0, 40.0]))
        assert order.tolist() == [15.0, 0.0, 0.0]

    def test_attacker_unbounded_band_caps_at_five(self, default_config):
        band = default_config.attacker_strategies[9]
        order = strategy_to_order(band, np.array([30.0, 50.0, 40.0]))
        assert order.tolist() == [150.0, 0.0, 0.0]

    def test_defender_giveup_band_orders_nothing(self, default_config):
        band = default_config.defender_strategies[0]
        order = strategy_to_order(band, np.array([30.0, 50.0, 40.0]))
        assert not order.any()


class TestClassifyStrategy:
    def test_attacker_ratio_just_above_one(self, default_config):
        # 33 firepower against a 30 requirement sits in the [1, 1.5) band
        idx = classify_strategy(ROLE_ATTACKER, np.array([33.0, 0, 0]),
                                np.array([30.0, 50, 40]), default_config)
        assert idx == 3

    def test_defender_zero_dispatch_is_giveup(self, default_config):
        idx = classify_strategy(ROLE_DEFENDER, np.zeros(3),
                                np.array([30.0, 50, 40]), default_config)
        assert idx == 1

    def test_defender_mixed_ratios(self, default_config):
        # k_a = 2.2, k_c = min(1.7, 1.7) -> fire band [2, inf), capacity [1.5, 2)
        demand = np.array([30.0, 50.0, 40.0])
        dispatched = np.array([30 * 2.2, 50 * 1.7, 40 * 1.7])
        idx = classify_strategy(ROLE_DEFENDER, dispatched, demand, default_config)
        assert idx == 9

    def test_zero_demand_firepower_counts_as_infinite(self, default_config):
        idx = classify_strategy(ROLE_ATTACKER, np.array([5.0, 0, 0]),
                                np.array([0.0, 50, 40]), default_config)
        assert idx == 10

    def test_defender_below_requirement_clusters_to_one(self, default_config):
        demand = np.array([30.0, 50.0, 40.0])
        dispatched = np.array([60.0, 45.0, 80.0])   # material below requirement
        idx = classify_strategy(ROLE_DEFENDER, dispatched, demand, default_config)
        assert idx == 1


@settings(max_examples=200, deadline=None)
@given(
    demand=st.lists(st.floats(min_value=1e-3, max_value=1e6), min_size=3, max_size=3),
    index=st.integers(min_value=1, max_value=10),
    role=st.sampled_from([ROLE_ATTACKER, ROLE_DEFENDER]),
)
def test_strategy_round_trip(demand, index, role):
    """Orders built from a band's caps classify back into the same band."""
    config = load_default()
    demand = np.array(demand)
    band = config.strategy_bands(role)[index - 1]
    order = strategy_to_order(band, demand)
    got = classify_strategy(role, order, demand, config)
    if role == ROLE_DEFENDER and index == 1:
        assert got == 1
    else:
        assert got == index


_DEFAULT = None


def load_default():
    global _DEFAULT
    if _DEFAULT is None:
        from fleetsim.config import load_scenario
        _DEFAULT = load_scenario()
    return _DEFAULT


class TestAccumulateDemandMatrix:
    def _demand(self, uid, due, attrs, arrival=0.0):
        return Demand(uid=uid, arrival_time=arrival, due_time=due,
                      attributes=np.array(attrs, dtype=float), target_fleet=0)

    def test_single_demand_lands_in_its_offset_column(self):
        matrix = accumulate_demand_matrix([self._demand(0, 3.0, [1, 2, 3])],
                                          now=0.0, horizon=6)
        np.testing.assert_allclose(matrix[:, 2], [1, 2, 3])
        assert matrix.sum() == 6.0

    def test_empty_input_gives_zero_matrix(self):
        matrix = accumulate_demand_matrix([], now=0.0, horizon=4)
        assert matrix.shape == (3, 4)
        assert not matrix.any()

    def test_same_offset_demands_sum(self):
        demands = [self._demand(0, 2.0, [1, 1, 1]),
                   self._demand(1, 2.0, [2, 0, 5])]
        matrix = accumulate_demand_matrix(demands, now=0.0, horizon=4)
        np.testing.assert_allclose(matrix[:, 1], [3, 1, 6])

    def test_beyond_horizon_excluded_and_mass_preserved(self):
        demands = [self._demand(0, 2.0, [1, 1, 1]),
                   self._demand(1, 9.0, [7, 7, 7])]
        matrix = accumulate_demand_matrix(demands, now=0.0, horizon=4)
        assert matrix.sum() == 3.0

    def test_demand_due_now_rejected(self):
        with pytest.raises(DomainError):
            accumulate_demand_matrix([self._demand(0, 2.0, [1, 1, 1])],
                                     now=2.0, horizon=4)


class TestDemandInvariants:
    def test_due_must_exceed_arrival(self):
        with pytest.raises(DomainError):
            Demand(uid=0, arrival_time=5.0, due_time=5.0,
                   attributes=np.zeros(3), target_fleet=0)

    def test_negative_attributes_rejected(self):
        with pytest.raises(DomainError):
            Demand(uid=0, arrival_time=0.0, due_time=5.0,
                   attributes=np.array([-1.0, 0, 0]), target_fleet=0)
