"""Demand stream: Poisson arrivals with truncated-Gaussian attribute draws."""
from __future__ import annotations

import math

import numpy as np

from .config import N_ATTRIBUTES, ScenarioConfig
from .domain import Demand


def generate_demands(rng: np.random.Generator, horizon_hours: float,
                     config: ScenarioConfig) -> list[Demand]:
    """All demands arriving within the horizon, in arrival order.

    Interarrival times are exponential; attribute draws are Gaussian
    truncated at zero; the target fleet is a fair coin (configurable); due
    times lag arrivals by a uniform lead.
    """
    if horizon_hours <= 0:
        raise ValueError("horizon must be positive")
    dd = config.demand
    demands: list[Demand] = []
    t = 0.0
    uid = 0
    lead_lo, lead_hi = dd.due_lead_hours
    while True:
        t += rng.exponential(dd.interarrival_mean_hours)
        if t >= horizon_hours:
            break
        attrs = rng.normal(dd.attribute_means, dd.attribute_stds)
        attrs = np.maximum(attrs, 0.0)
        target = int(rng.random() < dd.target_probability)
        lead = rng.uniform(lead_lo, lead_hi)
        demands.append(Demand(uid=uid, arrival_time=t,
                              due_time=math.ceil(t + lead),
                              attributes=attrs, target_fleet=target))
        uid += 1
    return demands
