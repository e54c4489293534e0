"""Engagement resolution: firepower-ratio damage and the win rule.

Both convoys damage each other simultaneously from pre-damage firepower.
The defender wins if and only if its post-damage delivered attributes cover
the demand entrywise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import FIREPOWER, ScenarioConfig
from .domain import Convoy, Demand, attributes_of_convoy


class EngagementError(ValueError):
    pass


@dataclass
class DamageReport:
    """Per-convoy component damage from one engagement."""

    # One (vehicle_position, component_type, hits) triple per newly damaged
    # component group; aggregate counts below must match their sum.
    defender_hits: list[tuple[int, int, int]] = field(default_factory=list)
    attacker_hits: list[tuple[int, int, int]] = field(default_factory=list)
    defender_damaged_components: np.ndarray = None
    attacker_damaged_components: np.ndarray = None


@dataclass
class EngagementOutcome:
    winner: str                      # "defender" or "attacker"
    defender_delivered: np.ndarray   # post-damage attribute vector
    demand_satisfied: bool
    damage: DamageReport

    def __post_init__(self):
        if self.demand_satisfied != (self.winner == "defender"):
            raise EngagementError("winner must match the satisfaction rule")


def damage_probability(k_di: float, adversary_firepower: float,
                       own_firepower: float) -> float:
    """Per-component damage probability tanh(k * adversary / own).

    A defenceless convoy (own firepower 0) facing any firepower is damaged
    with probability 1; facing none, 0.
    """
    if k_di < 0 or adversary_firepower < 0 or own_firepower < 0:
        raise EngagementError("damage inputs must be >= 0")
    if own_firepower == 0.0:
        return 1.0 if adversary_firepower > 0.0 else 0.0
    return float(np.tanh(k_di * adversary_firepower / own_firepower))


def damage_probabilities(config: ScenarioConfig, adversary_firepower: float,
                         own_firepower: float) -> np.ndarray:
    return np.array([
        damage_probability(k, adversary_firepower, own_firepower)
        for k in config.damage_factors
    ])


def apply_damage(convoy: Convoy, probabilities: np.ndarray,
                 rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """Damage each healthy component independently per its type probability.

    Mutates the convoy in place and returns (vehicle_position,
    component_type, hits) triples for every group that lost components.
    Already-damaged components are untouched.
    """
    if ((probabilities < 0) | (probabilities > 1)).any():
        raise EngagementError("probabilities must lie in [0, 1]")
    hits: list[tuple[int, int, int]] = []
    for pos, vehicle in enumerate(convoy.vehicles):
        for comp_type in range(len(probabilities)):
            n = int(vehicle.healthy[comp_type])
            if n == 0:
                continue
            p = float(probabilities[comp_type])
            lost = int(rng.binomial(n, p)) if p > 0.0 else 0
            if lost:
                vehicle.healthy[comp_type] -= lost
                vehicle.damaged[comp_type] += lost
                hits.append((pos, comp_type, lost))
    return hits


def resolve_event(demand: Demand, defender_convoy: Convoy, attacker_convoy: Convoy,
                  config: ScenarioConfig, rng: np.random.Generator) -> EngagementOutcome:
    """Resolve one engagement and report winner, delivery and damage.

    Damage to both sides is computed from pre-damage firepower (simultaneous
    move); the defender's delivery is then re-measured post-damage.
    """
    n_c = config.n_component_types
    defender_fire = float(attributes_of_convoy(defender_convoy, config)[FIREPOWER])
    attacker_fire = float(attributes_of_convoy(attacker_convoy, config)[FIREPOWER])

    p_defender = damage_probabilities(config, attacker_fire, defender_fire)
    p_attacker = damage_probabilities(config, defender_fire, attacker_fire)

    report = DamageReport()
    report.defender_hits = apply_damage(defender_convoy, p_defender, rng)
    report.attacker_hits = apply_damage(attacker_convoy, p_attacker, rng)
    report.defender_damaged_components = _aggregate(report.defender_hits, n_c)
    report.attacker_damaged_components = _aggregate(report.attacker_hits, n_c)

    delivered = attributes_of_convoy(defender_convoy, config, count_damaged=False)
    satisfied = bool((delivered >= demand.attributes).all())
    if defender_convoy.is_empty and (demand.attributes > 0).any():
        satisfied = False
    return EngagementOutcome(
        winner="defender" if satisfied else "attacker",
        defender_delivered=delivered,
        demand_satisfied=satisfied,
        damage=report,
    )


def _aggregate(hits: list[tuple[int, int, int]], n_component_types: int) -> np.ndarray:
    counts = np.zeros(n_component_types, dtype=np.int64)
    for _, comp_type, lost in hits:
        counts[comp_type] += lost
    return counts
