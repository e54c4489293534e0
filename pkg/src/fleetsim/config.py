"""Scenario configuration: vehicle/component catalogs, demand model, costs, stages.

The complete default scenario ships as ``data/default_scenario.json``; user
config files may override any subset of it (deep merge). All catalog numbers,
including the strategy bands and the vehicle-attribute table, are data here,
not code.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

N_ATTRIBUTES = 3
ATTRIBUTE_NAMES = ("firepower", "material", "personnel")
FIREPOWER, MATERIAL, PERSONNEL = 0, 1, 2

ROLE_ATTACKER = "attacker"
ROLE_DEFENDER = "defender"

KIND_MODULAR = "modular"
KIND_CONVENTIONAL = "conventional"


class ConfigError(ValueError):
    """Raised when a scenario file violates the schema or its invariants."""


def _ro(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VehicleTypeSpec:
    """One vehicle type: its attribute row and component composition."""

    index: int
    name: str
    attributes: np.ndarray       # float64 (N_ATTRIBUTES,)
    components: np.ndarray       # int64 (n_component_types,)

    @property
    def component_count(self) -> int:
        return int(self.components.sum())


@dataclass(frozen=True)
class ComponentTypeSpec:
    index: int
    name: str
    repair_hours: int
    damage_factor: float


@dataclass(frozen=True)
class StrategyBand:
    """One dispatch strategy row: half-open coefficient ranges.

    ``k_a`` bounds the ratio of assigned to required firepower; defenders
    additionally carry ``k_c`` for the capacity ratio. An upper bound of
    ``inf`` marks an unbounded band; order construction caps it at lo + 0.5.
    """

    role: str
    index: int
    k_a_lo: float
    k_a_hi: float                # math.inf when unbounded
    k_c_lo: float = 0.0
    k_c_hi: float = 0.0

    CAP_STEP = 0.5

    @property
    def k_a_cap(self) -> float:
        return self.k_a_lo + self.CAP_STEP if math.isinf(self.k_a_hi) else self.k_a_hi

    @property
    def k_c_cap(self) -> float:
        return self.k_c_lo + self.CAP_STEP if math.isinf(self.k_c_hi) else self.k_c_hi


@dataclass(frozen=True)
class DemandConfig:
    interarrival_mean_hours: float
    attribute_means: np.ndarray      # (N_ATTRIBUTES,)
    attribute_stds: np.ndarray       # (N_ATTRIBUTES,)
    due_lead_hours: tuple[float, float]
    target_probability: float


@dataclass(frozen=True)
class FleetConfig:
    name: str
    kind: str
    epsilon_f: float


@dataclass(frozen=True)
class StageSchedule:
    stochastic_months: int
    learning_months: int
    hours_per_month: int = 720

    @property
    def total_months(self) -> int:
        return self.stochastic_months + self.learning_months

    @property
    def total_hours(self) -> int:
        return self.total_months * self.hours_per_month

    @property
    def stochastic_hours(self) -> int:
        return self.stochastic_months * self.hours_per_month

    def is_learning(self, hour: int) -> bool:
        return hour >= self.stochastic_hours

    def month_of(self, hour: int) -> int:
        return hour // self.hours_per_month


@dataclass(frozen=True)
class CostConfig:
    """Objective weights for the base agent.

    Insufficiency must dominate redundancy: leaving part of an order
    unserved costs far more than carrying extra attributes afield.
    """

    insufficiency_per_attribute: float = 1000.0
    redundancy_per_attribute: float = 10.0
    action_cost_per_hour: float = 1.0
    holding_healthy_component: float = 0.01
    holding_healthy_vehicle_per_component: float = 0.01
    holding_damaged_component: float = 0.5
    holding_damaged_vehicle_per_component: float = 0.5

    def validate(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ConfigError(f"cost {name} must be >= 0")
        if self.insufficiency_per_attribute <= self.redundancy_per_attribute:
            raise ConfigError("insufficiency cost must exceed redundancy cost")


@dataclass(frozen=True)
class SolverConfig:
    max_nodes: int = 50000
    max_lp_iterations: int = 6_000
    wall_time_limit: float | None = None
    gomory_rounds: int = 3
    gomory_max_cuts: int = 36
    branch_up_first: bool = True


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    validation_fraction: float = 0.15
    patience: int = 30
    lstm_hidden: int = 32
    dense_hidden: tuple[int, ...] = (32, 32)
    standard_lstm_cell: bool = False

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("learning rate, epochs and batch size must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation fraction must lie in [0, 1)")
        if self.patience <= 0:
            raise ConfigError("patience must be positive")


@dataclass(frozen=True)
class PatternSearchConfig:
    initial_mesh_fraction: float = 0.25
    final_mesh: float = 0.25
    max_evaluations: int = 400


@dataclass(frozen=True)
class ScenarioConfig:
    """Full immutable scenario. Arrays are read-only; safe to share."""

    seed: int
    vehicles: tuple[VehicleTypeSpec, ...]
    components: tuple[ComponentTypeSpec, ...]
    attacker_strategies: tuple[StrategyBand, ...]
    defender_strategies: tuple[StrategyBand, ...]
    initial_vehicle_stock: int
    initial_component_stock: int
    component_assembly_hours: float
    component_disassembly_hours: float
    station_capacity: int
    planning_horizon_hours: int
    travel_hours: int
    demand: DemandConfig
    fleets: tuple[FleetConfig, ...]
    stages: StageSchedule
    costs: CostConfig
    solver: SolverConfig
    training: TrainConfig
    inference_window: int
    pattern_search: PatternSearchConfig
    raw: dict = field(repr=False, default_factory=dict)

    # Derived catalog matrices, filled by the loader.
    vehicle_attributes: np.ndarray = None    # (n_v, N_ATTRIBUTES) float64
    vehicle_components: np.ndarray = None    # (n_v, n_c) int64

    @property
    def n_vehicle_types(self) -> int:
        return len(self.vehicles)

    @property
    def n_component_types(self) -> int:
        return len(self.components)

    @property
    def component_repair_hours(self) -> np.ndarray:
        return _ro(np.array([c.repair_hours for c in self.components], dtype=np.int64))

    @property
    def damage_factors(self) -> np.ndarray:
        return _ro(np.array([c.damage_factor for c in self.components], dtype=np.float64))

    def strategy_bands(self, role: str) -> tuple[StrategyBand, ...]:
        if role == ROLE_ATTACKER:
            return self.attacker_strategies
        if role == ROLE_DEFENDER:
            return self.defender_strategies
        raise ConfigError(f"unknown role {role!r}")

    # Action durations in whole hours (the hour is the atomic tick).
    def assembly_hours(self, k: int) -> int:
        return max(1, math.ceil(self.vehicles[k].component_count * self.component_assembly_hours))

    def disassembly_hours(self, k: int) -> int:
        return max(1, math.ceil(self.vehicles[k].component_count * self.component_disassembly_hours))

    def reconfig_hours(self, k: int, k2: int) -> int:
        raw = (self.vehicles[k].component_count * self.component_disassembly_hours
               + self.vehicles[k2].component_count * self.component_assembly_hours)
        return max(1, math.ceil(raw))

    def vehicle_repair_hours(self, damaged_components: np.ndarray) -> int:
        per_comp = (self.component_disassembly_hours
                    + self.component_repair_hours.astype(np.float64)
                    + self.component_assembly_hours)
        raw = float(damaged_components @ per_comp)
        return max(1, math.ceil(raw))

    def max_action_delay(self) -> int:
        n_v = self.n_vehicle_types
        worst_repair = max(
            self.vehicle_repair_hours(self.vehicles[k].components) for k in range(n_v)
        )
        delays = [worst_repair, int(self.component_repair_hours.max())]
        delays += [self.assembly_hours(k) for k in range(n_v)]
        delays += [self.disassembly_hours(k) for k in range(n_v)]
        delays += [self.reconfig_hours(k, k2) for k in range(n_v) for k2 in range(n_v) if k != k2]
        return max(delays)

    @property
    def tau_max(self) -> int:
        return self.max_action_delay() + self.travel_hours


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_default_dict() -> dict:
    text = resources.files("fleetsim.data").joinpath("default_scenario.json").read_text()
    return json.loads(text)


def _parse_band(role: str, entry: dict) -> StrategyBand:
    k_a = entry["k_a"]
    k_c = entry.get("k_c", [0.0, 0.0])
    return StrategyBand(
        role=role,
        index=int(entry["index"]),
        k_a_lo=float(k_a[0]),
        k_a_hi=math.inf if k_a[1] is None else float(k_a[1]),
        k_c_lo=float(k_c[0]),
        k_c_hi=math.inf if k_c[1] is None else float(k_c[1]),
    )


def _validate_bands(role: str, bands: tuple[StrategyBand, ...]) -> None:
    if [b.index for b in bands] != list(range(1, 11)):
        raise ConfigError(f"{role} strategies must be indexed 1..10 in order")
    for b in bands:
        if not b.k_a_lo < b.k_a_hi:
            raise ConfigError(f"{role} strategy {b.index}: k_a range must satisfy lo < hi")
        if role == ROLE_DEFENDER and not b.k_c_lo < b.k_c_hi:
            raise ConfigError(f"{role} strategy {b.index}: k_c range must satisfy lo < hi")


def load_scenario(path: str | Path | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from the shipped defaults plus optional overrides.

    ``path`` points at a JSON file that is deep-merged over the defaults;
    ``overrides`` is merged last (used by the CLI for flag values).
    """
    data = _load_default_dict()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("scenario file must contain a JSON object")
        data = _deep_merge(data, user)
    if overrides:
        data = _deep_merge(data, overrides)
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        return _scenario_from_dict(data)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid scenario config: {exc!r}") from exc


def _scenario_from_dict(data: dict) -> ScenarioConfig:
    attr_names = tuple(data["attributes"])
    if attr_names != ATTRIBUTE_NAMES:
        raise ConfigError(f"attributes must be {ATTRIBUTE_NAMES}, got {attr_names}")

    comp_entries = data["components"]
    if not comp_entries:
        raise ConfigError("at least one component type required")
    components = tuple(
        ComponentTypeSpec(index=i, name=c["name"], repair_hours=int(c["repair_hours"]),
                          damage_factor=float(c["damage_factor"]))
        for i, c in enumerate(comp_entries)
    )
    comp_index = {c.name: c.index for c in components}
    for c in components:
        if c.repair_hours <= 0:
            raise ConfigError(f"component {c.name}: repair_hours must be positive")
        if c.damage_factor < 0:
            raise ConfigError(f"component {c.name}: damage_factor must be >= 0")

    vehicles = []
    for i, v in enumerate(data["vehicles"]):
        attrs = np.array([float(v[a]) for a in ATTRIBUTE_NAMES], dtype=np.float64)
        comps = np.zeros(len(components), dtype=np.int64)
        for cname, count in v["components"].items():
            if cname not in comp_index:
                raise ConfigError(f"vehicle {v['name']}: unknown component {cname!r}")
            comps[comp_index[cname]] = int(count)
        if (attrs < 0).any():
            raise ConfigError(f"vehicle {v['name']}: attributes must be >= 0")
        if (comps < 0).any() or comps.sum() < 1:
            raise ConfigError(f"vehicle {v['name']}: needs at least one component")
        vehicles.append(VehicleTypeSpec(index=i, name=v["name"],
                                        attributes=_ro(attrs), components=_ro(comps)))
    if not vehicles:
        raise ConfigError("at least one vehicle type required")

    attacker = tuple(_parse_band(ROLE_ATTACKER, e) for e in data["strategies"]["attacker"])
    defender = tuple(_parse_band(ROLE_DEFENDER, e) for e in data["strategies"]["defender"])
    _validate_bands(ROLE_ATTACKER, attacker)
    _validate_bands(ROLE_DEFENDER, defender)

    dd = data["demand"]
    demand = DemandConfig(
        interarrival_mean_hours=float(dd["interarrival_mean_hours"]),
        attribute_means=_ro(np.array([dd[a]["mean"] for a in ATTRIBUTE_NAMES], dtype=np.float64)),
        attribute_stds=_ro(np.array([dd[a]["std"] for a in ATTRIBUTE_NAMES], dtype=np.float64)),
        due_lead_hours=(float(dd["due_lead_hours"][0]), float(dd["due_lead_hours"][1])),
        target_probability=float(dd["target_probability"]),
    )
    if demand.interarrival_mean_hours <= 0:
        raise ConfigError("demand interarrival mean must be positive")
    if not 0.0 <= demand.target_probability <= 1.0:
        raise ConfigError("target probability must lie in [0, 1]")
    if not 0 < demand.due_lead_hours[0] <= demand.due_lead_hours[1]:
        raise ConfigError("due lead window must satisfy 0 < lo <= hi")

    fleets = tuple(
        FleetConfig(name=f["name"], kind=f["kind"], epsilon_f=float(f["epsilon_f"]))
        for f in data["fleets"]
    )
    if len(fleets) != 2:
        raise ConfigError("exactly two fleets required")
    for f in fleets:
        if f.kind not in (KIND_MODULAR, KIND_CONVENTIONAL):
            raise ConfigError(f"fleet {f.name}: kind must be modular or conventional")
        if not 0.0 <= f.epsilon_f <= 1.0:
            raise ConfigError(f"fleet {f.name}: epsilon_f must lie in [0, 1]")
    if fleets[0].name == fleets[1].name:
        raise ConfigError("fleet names must differ")

    st = data["stages"]
    stages = StageSchedule(
        stochastic_months=int(st["stochastic_months"]),
        learning_months=int(st["learning_months"]),
        hours_per_month=int(st.get("hours_per_month", 720)),
    )
    if stages.stochastic_months <= 0 or stages.learning_months < 0:
        raise ConfigError("stochastic months must be positive, learning months >= 0")
    if stages.hours_per_month <= 0:
        raise ConfigError("hours per month must be positive")

    costs = CostConfig(**data["costs"])
    costs.validate()

    sv = data["solver"]
    solver = SolverConfig(
        max_nodes=int(sv["max_nodes"]),
        max_lp_iterations=int(sv["max_lp_iterations"]),
        wall_time_limit=None if sv.get("wall_time_limit") is None else float(sv["wall_time_limit"]),
        gomory_rounds=int(sv.get("gomory_rounds", 3)),
        gomory_max_cuts=int(sv.get("gomory_max_cuts", 36)),
        branch_up_first=bool(sv.get("branch_up_first", True)),
    )
    if solver.max_nodes <= 0 or solver.max_lp_iterations <= 0:
        raise ConfigError("solver budgets must be positive")

    tr = dict(data["training"])
    tr["dense_hidden"] = tuple(int(h) for h in tr.get("dense_hidden", (32, 32)))
    training = TrainConfig(**tr)
    training.validate()

    ps = data["pattern_search"]
    pattern = PatternSearchConfig(
        initial_mesh_fraction=float(ps["initial_mesh_fraction"]),
        final_mesh=float(ps["final_mesh"]),
        max_evaluations=int(ps["max_evaluations"]),
    )
    if pattern.initial_mesh_fraction <= 0 or pattern.final_mesh <= 0:
        raise ConfigError("pattern search mesh parameters must be positive")

    ivs = int(data["initial_vehicle_stock"])
    ics = int(data["initial_component_stock"])
    cap = int(data["station_capacity"])
    horizon = int(data["planning_horizon_hours"])
    travel = int(data["travel_hours"])
    if ivs < 0 or ics < 0:
        raise ConfigError("initial stocks must be >= 0")
    if cap < 1:
        raise ConfigError("station capacity must be >= 1")
    if horizon < 1:
        raise ConfigError("planning horizon must be >= 1")
    if travel < 1:
        raise ConfigError("travel time must be >= 1 hour")
    window = int(data["inference_window"])
    if window < 1:
        raise ConfigError("inference window must be >= 1")

    cfg = ScenarioConfig(
        seed=int(data["seed"]),
        vehicles=tuple(vehicles),
        components=components,
        attacker_strategies=attacker,
        defender_strategies=defender,
        initial_vehicle_stock=ivs,
        initial_component_stock=ics,
        component_assembly_hours=float(data["component_assembly_hours"]),
        component_disassembly_hours=float(data["component_disassembly_hours"]),
        station_capacity=cap,
        planning_horizon_hours=horizon,
        travel_hours=travel,
        demand=demand,
        fleets=fleets,
        stages=stages,
        costs=costs,
        solver=solver,
        training=training,
        inference_window=window,
        pattern_search=pattern,
        raw=data,
        vehicle_attributes=_ro(np.stack([v.attributes for v in vehicles])),
        vehicle_components=_ro(np.stack([v.components for v in vehicles])),
    )
    return cfg
