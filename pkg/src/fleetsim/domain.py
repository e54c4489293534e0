"""Core domain vocabulary: demands, convoys, strategy bands and their mappings.

Attribute vectors are plain float64 numpy arrays of length 3 ordered
(firepower, material capacity, personnel capacity).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import (
    N_ATTRIBUTES,
    ROLE_ATTACKER,
    ROLE_DEFENDER,
    FIREPOWER,
    MATERIAL,
    PERSONNEL,
    ScenarioConfig,
    StrategyBand,
)

# Ratio comparisons use a small tolerance so that orders built from a band's
# upper bound classify back into the same band despite float rounding.
RATIO_TOL = 1e-9


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Demand:
    """One battlefield demand, already converted to attribute requirements."""

    uid: int
    arrival_time: float
    due_time: float
    attributes: np.ndarray          # (N_ATTRIBUTES,) float64, >= 0
    target_fleet: int               # index of the defending fleet

    def __post_init__(self):
        if self.due_time <= self.arrival_time:
            raise DomainError(f"demand {self.uid}: due time must exceed arrival time")
        if (self.attributes < 0).any():
            raise DomainError(f"demand {self.uid}: attributes must be >= 0")


@dataclass
class ConvoyVehicle:
    """A dispatched vehicle instance with per-component-type health counts."""

    vehicle_type: int
    healthy: np.ndarray             # int64 (n_component_types,)
    damaged: np.ndarray             # int64 (n_component_types,)

    @property
    def total_components(self) -> int:
        return int(self.healthy.sum() + self.damaged.sum())

    @property
    def healthy_fraction(self) -> float:
        total = self.total_components
        if total == 0:
            return 0.0
        return float(self.healthy.sum()) / total


@dataclass
class Convoy:
    """The set of vehicle instances dispatched to one event."""

    vehicles: list[ConvoyVehicle] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vehicles)

    @property
    def is_empty(self) -> bool:
        return not self.vehicles

    def vehicle_counts(self, n_vehicle_types: int) -> np.ndarray:
        counts = np.zeros(n_vehicle_types, dtype=np.int64)
        for v in self.vehicles:
            counts[v.vehicle_type] += 1
        return counts

    def component_totals(self, n_component_types: int) -> np.ndarray:
        total = np.zeros(n_component_types, dtype=np.int64)
        for v in self.vehicles:
            total += v.healthy + v.damaged
        return total


def fresh_convoy(vehicle_counts: np.ndarray, config: ScenarioConfig) -> Convoy:
    """Form a convoy of fully healthy vehicles from per-type counts."""
    vehicles = []
    for k, count in enumerate(vehicle_counts):
        if count < 0:
            raise DomainError(f"vehicle count for type {k} must be >= 0")
        for _ in range(int(count)):
            vehicles.append(ConvoyVehicle(
                vehicle_type=k,
                healthy=config.vehicles[k].components.copy(),
                damaged=np.zeros(config.n_component_types, dtype=np.int64),
            ))
    return Convoy(vehicles)


def attributes_of_convoy(convoy: Convoy, config: ScenarioConfig,
                         count_damaged: bool = True) -> np.ndarray:
    """Total attribute vector carried by a convoy.

    With ``count_damaged`` False, each vehicle contributes its attribute row
    scaled by its fraction of healthy components; a vehicle with damage
    delivers proportionally less.
    """
    total = np.zeros(N_ATTRIBUTES, dtype=np.float64)
    for v in convoy.vehicles:
        if v.vehicle_type < 0 or v.vehicle_type >= config.n_vehicle_types:
            raise DomainError(f"unknown vehicle type {v.vehicle_type}")
        attrs = config.vehicles[v.vehicle_type].attributes
        if count_damaged:
            total += attrs
        else:
            total += attrs * v.healthy_fraction
    return total


def strategy_to_order(band: StrategyBand, demand_attributes: np.ndarray) -> np.ndarray:
    """Convert a strategy band into a dispatch order via its coefficient caps.

    Attackers order firepower only. A defender band whose firepower cap does
    not exceed the requirement is the give-up class and orders nothing.
    """
    if (demand_attributes < 0).any():
        raise DomainError("demand attributes must be >= 0")
    order = np.zeros(N_ATTRIBUTES, dtype=np.float64)
    if band.role == ROLE_ATTACKER:
        order[FIREPOWER] = band.k_a_cap * demand_attributes[FIREPOWER]
        return order
    if band.k_a_cap <= 1.0:
        return order
    order[FIREPOWER] = band.k_a_cap * demand_attributes[FIREPOWER]
    order[MATERIAL] = band.k_c_cap * demand_attributes[MATERIAL]
    order[PERSONNEL] = band.k_c_cap * demand_attributes[PERSONNEL]
    return order


def _ratio(dispatched: float, required: float) -> float:
    if required > 0.0:
        return dispatched / required
    return math.inf


def _band_contains(lo: float, hi: float, value: float) -> bool:
    # Widened by RATIO_TOL on both ends; ties on a boundary resolve to the
    # lower band because bands are scanned in index order.
    if value < lo - RATIO_TOL:
        return False
    if math.isinf(hi):
        return True
    return value <= hi + RATIO_TOL


def classify_strategy(role: str, dispatched: np.ndarray, demand: np.ndarray,
                      config: ScenarioConfig) -> int:
    """Map dispatched attributes back to the strategy band they realize.

    Attackers classify on the firepower ratio alone. Defenders classify on
    (firepower ratio, min capacity ratio); anything below requirement in
    either coordinate is the give-up class 1. A zero requirement counts as
    satisfied at infinite ratio.
    """
    bands = config.strategy_bands(role)
    if role == ROLE_ATTACKER:
        k_a = _ratio(float(dispatched[FIREPOWER]), float(demand[FIREPOWER]))
        if float(dispatched[FIREPOWER]) <= 0.0 and not float(demand[FIREPOWER]) > 0.0:
            return 1
        for band in bands:
            if _band_contains(band.k_a_lo, band.k_a_hi, k_a):
                return band.index
        return bands[-1].index

    if not (dispatched > 0).any():
        return 1
    k_a = _ratio(float(dispatched[FIREPOWER]), float(demand[FIREPOWER]))
    k_c = min(_ratio(float(dispatched[MATERIAL]), float(demand[MATERIAL])),
              _ratio(float(dispatched[PERSONNEL]), float(demand[PERSONNEL])))
    if k_a < 1.0 - RATIO_TOL or k_c < 1.0 - RATIO_TOL:
        return 1
    for band in bands[1:]:
        if _band_contains(band.k_a_lo, band.k_a_hi, k_a) and \
           _band_contains(band.k_c_lo, band.k_c_hi, k_c):
            return band.index
    return 1


def accumulate_demand_matrix(demands, now: float, horizon: int) -> np.ndarray:
    """Stack demand attributes into a (N_ATTRIBUTES, horizon) matrix.

    Column j (0-based) collects everything due in the interval
    (now + j, now + j + 1]; demands due beyond the horizon are excluded.
    """
    matrix = np.zeros((N_ATTRIBUTES, horizon), dtype=np.float64)
    for d in demands:
        offset = d.due_time - now
        if offset <= 0:
            raise DomainError(f"demand due at {d.due_time} is not after {now}")
        column = math.ceil(offset)
        if column > horizon:
            continue
        matrix[:, column - 1] += d.attributes
    return matrix
