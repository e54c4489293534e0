import math

import numpy as np
import pytest

from fleetsim.demands import generate_demands


class TestGenerateDemands:
    def test_interarrival_mean_within_three_sigma(self, default_config):
        rng = np.random.default_rng(0)
        demands = generate_demands(rng, 110_000.0, default_config)
        gaps = np.diff([0.0] + [d.arrival_time for d in demands])
        n = len(gaps)
        assert n > 9000
        mean = default_config.demand.interarrival_mean_hours
        # exponential mean estimator: sigma = mean / sqrt(n)
        assert abs(gaps.mean() - mean) <= 3 * mean / math.sqrt(n)

    def test_attribute_means_match_truncated_normals(self, default_config):
        """Sample means against a truncated-normal oracle computed by
        quadrature-free closed form: E[max(X,0)] for X ~ N(mu, sd)."""
        rng = np.random.default_rng(1)
        demands = generate_demands(rng, 110_000.0, default_config)
        attrs = np.stack([d.attributes for d in demands])
        n = attrs.shape[0]
        mus = default_config.demand.attribute_means
        sds = default_config.demand.attribute_stds
        for h in range(3):
            mu, sd = mus[h], sds[h]
            z = mu / sd
            phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            Phi = 0.5 * (1 + math.erf(z / math.sqrt(2)))
            truncated_mean = mu * Phi + sd * phi
            sample_sigma = attrs[:, h].std(ddof=1) / math.sqrt(n)
            assert abs(attrs[:, h].mean() - truncated_mean) <= 4 * sample_sigma

    def test_no_negative_attributes(self, default_config):
        rng = np.random.default_rng(2)
        demands = generate_demands(rng, 20_000.0, default_config)
        assert all((d.attributes >= 0).all() for d in demands)

    def test_target_fleet_is_a_fair_coin(self, default_config):
        rng = np.random.default_rng(3)
        demands = generate_demands(rng, 110_000.0, default_config)
        n = len(demands)
        targets = sum(d.target_fleet for d in demands)
        sigma = math.sqrt(n * 0.25)
        assert abs(targets - n / 2) <= 3 * sigma

    def test_due_lead_within_configured_window(self, default_config):
        rng = np.random.default_rng(4)
        lo, hi = default_config.demand.due_lead_hours
        for d in generate_demands(rng, 5_000.0, default_config):
            lead = d.due_time - d.arrival_time
            assert lo - 1 <= lead <= hi + 1   # due times round up to the hour

    def test_seeded_stream_replays_identically(self, default_config):
        a = generate_demands(np.random.default_rng(77), 10_000.0, default_config)
        b = generate_demands(np.random.default_rng(77), 10_000.0, default_config)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.arrival_time == y.arrival_time
            assert x.due_time == y.due_time
            assert np.array_equal(x.attributes, y.attributes)
            assert x.target_fleet == y.target_fleet

    def test_nonpositive_horizon_rejected(self, default_config):
        with pytest.raises(ValueError):
            generate_demands(np.random.default_rng(0), 0.0, default_config)
