"""Discrete-event harness: the clock, both fleets' agent stacks, engagements.

Hourly loop: register newly arrived demands and take both fleets' dispatch
decisions, resolve engagements coming due, apply convoy returns, let each
base agent plan and execute one tick of operations, then audit conservation.
Monthly: finalize metrics and, in the learning stage, retrain every learned
model from accumulated history.

Everything is driven by named substreams of one seed; two runs with the same
config produce byte-identical logs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    KIND_CONVENTIONAL,
    N_ATTRIBUTES,
    ROLE_ATTACKER,
    ROLE_DEFENDER,
    ScenarioConfig,
)
from .demands import generate_demands
from .dispatch import (
    DispatchDecision,
    build_feasibility_corpus,
    build_success_corpus,
    decide_dispatch,
    feasibility_features,
    optimize_order,
    stochastic_stage_order,
    success_features,
    surrogate_objective,
)
from .domain import (
    Convoy,
    Demand,
    attributes_of_convoy,
    classify_strategy,
    fresh_convoy,
)
from .dynamics import (
    Arrivals,
    DamagedVehicleRecord,
    InventoryState,
    PendingActions,
    component_census,
    initial_inventory,
    step_fleet,
)
from .engagement import resolve_event
from .inference import EventRecord, InferenceAgent
from .metrics import MonthMetrics, collect_metrics
from .neural import Network, train
from .scheduler import plan_actions

MODEL_TAGS = ("inference_attacker", "inference_defender", "feasibility", "success")


class HarnessError(RuntimeError):
    pass


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), default=_jsonify)


@dataclass
class OrderEntry:
    demand_uid: int
    deadline: int
    order: np.ndarray
    demand: Demand
    role: str
    decision: DispatchDecision
    feas_features: np.ndarray


@dataclass
class AfieldConvoy:
    demand_uid: int
    convoy: Convoy
    due: int
    role: str
    order: np.ndarray
    return_tick: int | None = None   # set at resolution


@dataclass
class FleetRuntime:
    index: int
    name: str
    kind: str
    epsilon_f: float
    inventory: InventoryState
    pending: PendingActions
    rng: np.random.Generator
    inference: InferenceAgent
    order_book: dict = field(default_factory=dict)          # deadline -> OrderEntry
    afield: dict = field(default_factory=dict)              # demand_uid -> AfieldConvoy
    history: list = field(default_factory=list)             # EventRecord
    feas_samples: list = field(default_factory=list)
    succ_samples: list = field(default_factory=list)
    pending_success: dict = field(default_factory=dict)     # uid -> (order, D(t))
    pending_decisions: dict = field(default_factory=dict)   # uid -> DispatchDecision
    f_feas: Network | None = None
    f_succ: Network | None = None
    damaged_uid: int = 0
    trained_sizes: dict = field(default_factory=dict)       # model tag -> n samples
    initial_census: np.ndarray | None = None
    solve_seconds: float = 0.0
    solves: int = 0


@dataclass
class SimulationResult:
    rows: list            # MonthMetrics for every month and fleet
    log_lines: list[str]
    events: int
    summary: dict


class SimulationEngine:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.tp = config.planning_horizon_hours
        root = np.random.SeedSequence(config.seed)
        demand_ss, engage_ss, f0_ss, f1_ss = root.spawn(4)
        self.demand_rng = np.random.default_rng(demand_ss)
        self.engage_rng = np.random.default_rng(engage_ss)
        self.fleets = [
            self._make_fleet(0, np.random.default_rng(f0_ss)),
            self._make_fleet(1, np.random.default_rng(f1_ss)),
        ]
        self.log_lines: list[str] = []
        self.month_records: list[dict] = []
        self.rows: list[MonthMetrics] = []
        self.events_resolved = 0

    def _make_fleet(self, index: int, rng) -> FleetRuntime:
        cfg = self.config.fleets[index]
        inv = initial_inventory(self.config)
        pending = PendingActions()
        fleet = FleetRuntime(index=index, name=cfg.name, kind=cfg.kind,
                             epsilon_f=cfg.epsilon_f, inventory=inv,
                             pending=pending, rng=rng,
                             inference=InferenceAgent(self.config))
        fleet.initial_census = component_census(inv, pending, self.config)
        return fleet

    # -- logging -------------------------------------------------------------
    def _log(self, record: dict) -> None:
        self.log_lines.append(_dump(record))
        if record.get("type") in ("event", "tick"):
            self.month_records.append(record)

    # -- feature helpers -----------------------------------------------------
    def _stock_vector(self, fleet: FleetRuntime) -> np.ndarray:
        return np.concatenate([fleet.inventory.vehicles,
                               fleet.inventory.components]).astype(np.float64)

    def _pending_deltas(self, fleet: FleetRuntime, t: int) -> np.ndarray:
        n_v, n_c = self.config.n_vehicle_types, self.config.n_component_types
        out = np.zeros((self.tp, n_v + n_c))
        for effect in fleet.pending.effects:
            off = effect.completion_time - t
            if 1 <= off <= self.tp:
                out[off - 1, :n_v] += effect.vehicles_delta
                out[off - 1, n_v:] += effect.components_delta
        return out

    def _demand_matrix(self, fleet: FleetRuntime, t: int) -> np.ndarray:
        matrix = np.zeros((N_ATTRIBUTES, self.tp))
        for deadline, entry in fleet.order_book.items():
            off = deadline - t
            if 0 < off <= self.tp:
                matrix[:, off - 1] += entry.order
        return matrix

    def _order_window(self, fleet: FleetRuntime, t: int) -> np.ndarray:
        window = np.zeros((self.tp, N_ATTRIBUTES))
        for deadline, entry in fleet.order_book.items():
            off = deadline - t
            if 0 <= off < self.tp:
                window[off] += entry.order
        return window

    # -- decision ------------------------------------------------------------
    def _decide(self, fleet: FleetRuntime, demand: Demand, t: int) -> None:
        role = ROLE_DEFENDER if demand.target_fleet == fleet.index else ROLE_ATTACKER
        adv_role = ROLE_ATTACKER if role == ROLE_DEFENDER else ROLE_DEFENDER
        learning = self.config.stages.is_learning(t)
        stocks = self._stock_vector(fleet)
        deltas = self._pending_deltas(fleet, t)
        dmatrix = self._demand_matrix(fleet, t)

        if not learning:
            decision = stochastic_stage_order(fleet.rng, role, demand.attributes,
                                              self.config)
        elif fleet.f_feas is None or fleet.f_succ is None:
            decision = stochastic_stage_order(fleet.rng, role, demand.attributes,
                                              self.config)
            decision.fallback = True
        else:
            cls, forecast, fell = fleet.inference.forecast(
                fleet.history, demand.attributes, adv_role)
            objective = surrogate_objective(fleet.f_feas, fleet.f_succ, stocks,
                                            deltas, forecast, dmatrix)
            order, _ = optimize_order(objective, demand.attributes,
                                      self.config.pattern_search)
            xf = feasibility_features(order, stocks, deltas, dmatrix)
            xs = success_features(order, forecast, dmatrix)
            p_f = float(fleet.f_feas.predict(xf[None, :])[0, 0])
            p_s = float(fleet.f_succ.predict(xs[None, :])[0, 0])
            decision = decide_dispatch(order, p_f, p_s, fleet.epsilon_f, role,
                                       demand.attributes, self.config)
            decision.forecast_adversary = forecast
            decision.forecast_class = cls
            decision.fallback = fell

        feas_feats = feasibility_features(decision.order, stocks, deltas, dmatrix)
        deadline = None
        if decision.order.any():
            deadline = int(demand.due_time) - self.config.travel_hours
            while deadline in fleet.order_book:
                deadline -= 1
            if deadline < t:
                raise HarnessError("dispatch deadline fell into the past")
            fleet.order_book[deadline] = OrderEntry(
                demand_uid=demand.uid, deadline=deadline, order=decision.order,
                demand=demand, role=role, decision=decision,
                feas_features=feas_feats)
        else:
            # Nothing ordered: vacuously feasible sample, empty convoy afield.
            fleet.feas_samples.append((decision.order.copy(),
                                       np.zeros(N_ATTRIBUTES), feas_feats))
        fleet.pending_success[demand.uid] = (decision.order.copy(), dmatrix.copy())
        fleet.pending_decisions[demand.uid] = decision
        self._log({
            "type": "decision", "t": t, "fleet": fleet.name,
            "demand": demand.uid, "role": role,
            "order": decision.order, "gave_up": decision.gave_up,
            "strategy": decision.strategy,
            "p_f": decision.p_feasible, "p_s": decision.p_success,
            "p_w": decision.p_win,
            "forecast": decision.forecast_adversary,
            "forecast_class": decision.forecast_class,
            "stochastic": decision.stochastic, "fallback": decision.fallback,
            "deadline": deadline,
        })

    # -- engagement ----------------------------------------------------------
    def _resolve(self, demand: Demand, t: int) -> None:
        defender = self.fleets[demand.target_fleet]
        attacker = self.fleets[1 - demand.target_fleet]
        d_entry = defender.afield.get(demand.uid)
        a_entry = attacker.afield.get(demand.uid)
        d_convoy = d_entry.convoy if d_entry else Convoy()
        a_convoy = a_entry.convoy if a_entry else Convoy()

        if d_convoy.is_empty and a_convoy.is_empty:
            winner = "draw"
            delivered = np.zeros(N_ATTRIBUTES)
            d_damage = a_damage = 0
        else:
            outcome = resolve_event(demand, d_convoy, a_convoy, self.config,
                                    self.engage_rng)
            winner = defender.name if outcome.winner == "defender" else attacker.name
            delivered = outcome.defender_delivered
            d_damage = int(outcome.damage.defender_damaged_components.sum())
            a_damage = int(outcome.damage.attacker_damaged_components.sum())

        sides = []
        for fleet, entry, convoy, damage in (
                (defender, d_entry, d_convoy, d_damage),
                (attacker, a_entry, a_convoy, a_damage)):
            role = ROLE_DEFENDER if fleet is defender else ROLE_ATTACKER
            dispatched = attributes_of_convoy(convoy, self.config)
            order, dmatrix = fleet.pending_success.pop(demand.uid)
            decision = fleet.pending_decisions.pop(demand.uid)
            won = winner == fleet.name
            strategy = classify_strategy(role, dispatched, demand.attributes,
                                         self.config)
            adv_fleet = attacker if fleet is defender else defender
            adv_convoy = a_convoy if fleet is defender else d_convoy
            adv_dispatched = attributes_of_convoy(adv_convoy, self.config)
            adv_role = ROLE_ATTACKER if role == ROLE_DEFENDER else ROLE_DEFENDER
            adv_strategy = classify_strategy(adv_role, adv_dispatched,
                                             demand.attributes, self.config)
            fleet.history.append(EventRecord(
                time=float(t), demand=demand.attributes.copy(),
                own_dispatched=dispatched, adversary_dispatched=adv_dispatched,
                own_role=role, won=won, adversary_strategy=adv_strategy))
            fleet.succ_samples.append((
                success_features(order, adv_dispatched, dmatrix),
                1.0 if won else 0.0))
            forecast_err = None
            if decision.forecast_adversary is not None:
                err = decision.forecast_adversary - adv_dispatched
                forecast_err = (err * err).tolist()
            sides.append({
                "fleet": fleet.name, "role": role,
                "dispatched": dispatched, "order": order,
                "damage": damage, "strategy": strategy,
                "adversary_strategy": adv_strategy,
                "forecast_error_sq": forecast_err,
            })
            # Schedule the convoy's trip home.
            if entry is not None:
                entry.return_tick = t + self.config.travel_hours

        self.events_resolved += 1
        self._log({
            "type": "event", "t": t, "demand": demand.uid,
            "due": int(demand.due_time), "winner": winner,
            "demand_attributes": demand.attributes,
            "delivered": delivered, "sides": sides,
        })

    def _collect_returns(self, fleet: FleetRuntime, t: int) -> Arrivals:
        n_v = self.config.n_vehicle_types
        arrivals = Arrivals.none(n_v)
        due_uids = [uid for uid, entry in fleet.afield.items()
                    if entry.return_tick == t]
        for uid in sorted(due_uids):
            entry = fleet.afield.pop(uid)
            for vehicle in entry.convoy.vehicles:
                if vehicle.damaged.any():
                    fleet.damaged_uid += 1
                    arrivals.damaged_vehicles.append(DamagedVehicleRecord(
                        uid=fleet.damaged_uid,
                        vehicle_type=vehicle.vehicle_type,
                        damaged_components=vehicle.damaged.copy(),
                        healthy_components=vehicle.healthy.copy()))
                else:
                    arrivals.healthy_vehicles[vehicle.vehicle_type] += 1
        return arrivals

    # -- base agent tick ------------------------------------------------------
    def _fleet_tick(self, fleet: FleetRuntime, t: int) -> None:
        window = self._order_window(fleet, t)
        known_returns = []
        for entry in fleet.afield.values():
            if entry.return_tick is not None and entry.return_tick >= t:
                counts = np.zeros(self.config.n_vehicle_types, dtype=np.int64)
                for vehicle in entry.convoy.vehicles:
                    if not vehicle.damaged.any():
                        counts[vehicle.vehicle_type] += 1
                if counts.any():
                    known_returns.append((entry.return_tick, counts))
        known_returns.sort(key=lambda kr: kr[0])

        action, info = plan_actions(fleet.inventory, fleet.pending, t, window,
                                    known_returns, self.config, fleet.kind)
        fleet.solve_seconds += info.solve_seconds
        if not info.fast_path:
            fleet.solves += 1
        if action.total_starts > self.config.station_capacity:
            raise HarnessError(f"{fleet.name}: station capacity exceeded at t={t}")

        entry = fleet.order_book.pop(t, None)
        if action.dispatch.any():
            if entry is None:
                raise HarnessError(f"{fleet.name}: dispatch without an order at t={t}")
            convoy = fresh_convoy(action.dispatch, self.config)
            dispatched = attributes_of_convoy(convoy, self.config)
            fleet.afield[entry.demand_uid] = AfieldConvoy(
                demand_uid=entry.demand_uid, convoy=convoy,
                due=int(entry.demand.due_time), role=entry.role,
                order=entry.order)
            fleet.feas_samples.append((entry.order.copy(), dispatched,
                                       entry.feas_features))
            self._log({"type": "dispatch", "t": t, "fleet": fleet.name,
                       "demand": entry.demand_uid,
                       "counts": action.dispatch, "attributes": dispatched,
                       "feasible": bool((dispatched >= entry.order - 1e-9).all())})
        elif entry is not None:
            # Order came due but nothing could be dispatched.
            fleet.afield[entry.demand_uid] = AfieldConvoy(
                demand_uid=entry.demand_uid, convoy=Convoy(),
                due=int(entry.demand.due_time), role=entry.role,
                order=entry.order)
            fleet.feas_samples.append((entry.order.copy(),
                                       np.zeros(N_ATTRIBUTES),
                                       entry.feas_features))
            self._log({"type": "dispatch", "t": t, "fleet": fleet.name,
                       "demand": entry.demand_uid,
                       "counts": action.dispatch, "attributes": np.zeros(N_ATTRIBUTES),
                       "feasible": bool(not entry.order.any())})

        arrivals = self._collect_returns(fleet, t)
        arrivals.order = window[0].copy()
        hours = _station_hours(action, fleet.inventory.damaged_vehicles, self.config)
        fleet.inventory = step_fleet(fleet.inventory, action, arrivals,
                                     fleet.pending, t, self.config, fleet.kind)
        self._log({
            "type": "tick", "t": t, "fleet": fleet.name,
            "vehicles": fleet.inventory.vehicles,
            "components": fleet.inventory.components,
            "damaged_components": fleet.inventory.damaged_components,
            "damaged_vehicles": len(fleet.inventory.damaged_vehicles),
            "order_remainder": fleet.inventory.order_remainder,
            "station_starts": action.total_starts,
            "station_hours": hours,
            "plan_status": info.status,
            "plan_nodes": info.nodes,
        })

    def _audit(self, fleet: FleetRuntime, t: int) -> None:
        census = component_census(fleet.inventory, fleet.pending, self.config)
        for entry in fleet.afield.values():
            census = census + entry.convoy.component_totals(
                self.config.n_component_types)
        if not np.array_equal(census, fleet.initial_census):
            raise HarnessError(
                f"{fleet.name}: component conservation violated at t={t}: "
                f"{census.tolist()} vs {fleet.initial_census.tolist()}")

    # -- retraining ------------------------------------------------------------
    def _retrain(self, fleet: FleetRuntime, month: int) -> None:
        tr = self.config.training
        for tag in MODEL_TAGS:
            seed = int(np.random.SeedSequence(
                (self.config.seed, fleet.index, month, MODEL_TAGS.index(tag))
            ).generate_state(1)[0])
            if tag.startswith("inference"):
                adv_role = ROLE_ATTACKER if tag.endswith("attacker") else ROLE_DEFENDER
                n_samples = sum(1 for r in fleet.history if r.own_role != adv_role)
                if n_samples == fleet.trained_sizes.get(tag, -1) or n_samples == 0:
                    self._log({"type": "retrain", "month": month, "fleet": fleet.name,
                               "model": tag, "samples": n_samples, "skipped": True})
                    continue
                result = fleet.inference.retrain(fleet.history, adv_role, seed)
                fleet.trained_sizes[tag] = n_samples
            else:
                if tag == "feasibility":
                    X, y = build_feasibility_corpus(fleet.feas_samples)
                else:
                    X, y = build_success_corpus(fleet.succ_samples)
                n_samples = int(X.shape[0])
                if n_samples == fleet.trained_sizes.get(tag, -1) or n_samples == 0:
                    self._log({"type": "retrain", "month": month, "fleet": fleet.name,
                               "model": tag, "samples": n_samples, "skipped": True})
                    continue
                net = Network.probability_regressor(X.shape[1], tr.dense_hidden, seed)
                result = train(net, X, y, tr, seed=seed)
                losses = result.val_loss or result.train_loss
                if losses and np.isfinite(losses[-1]):
                    if tag == "feasibility":
                        fleet.f_feas = net
                    else:
                        fleet.f_succ = net
                else:
                    result = None
                fleet.trained_sizes[tag] = n_samples
            self._log({
                "type": "retrain", "month": month, "fleet": fleet.name,
                "model": tag, "samples": n_samples, "skipped": False,
                "epochs": len(result.train_loss) if result else 0,
                "final_val_loss": (result.val_loss[-1] if result and result.val_loss
                                   else None),
            })

    # -- main loop --------------------------------------------------------------
    def run(self) -> SimulationResult:
        config = self.config
        horizon = config.stages.total_hours
        self._log({"type": "config", "config": config.raw, "seed": config.seed})

        all_demands = generate_demands(self.demand_rng, horizon, config)
        demands = [d for d in all_demands if d.due_time <= horizon - 1]
        arrivals_at: dict[int, list[Demand]] = {}
        due_at: dict[int, list[Demand]] = {}
        for d in demands:
            arrivals_at.setdefault(math.ceil(d.arrival_time), []).append(d)
            due_at.setdefault(int(d.due_time), []).append(d)
            self._log({"type": "demand", "uid": d.uid,
                       "arrival": d.arrival_time, "due": d.due_time,
                       "attributes": d.attributes, "target": d.target_fleet})

        for t in range(horizon):
            for demand in arrivals_at.get(t, ()):
                for fleet in self.fleets:
                    self._decide(fleet, demand, t)
            for demand in due_at.get(t, ()):
                self._resolve(demand, t)
            for fleet in self.fleets:
                self._fleet_tick(fleet, t)
                self._audit(fleet, t)
            if (t + 1) % config.stages.hours_per_month == 0:
                month = t // config.stages.hours_per_month
                self.rows.extend(collect_metrics(self.month_records, month, config))
                self.month_records = []
                next_hour = t + 1
                if (config.stages.is_learning(next_hour)
                        and next_hour < horizon):
                    for fleet in self.fleets:
                        self._retrain(fleet, month + 1)
                for row in self.rows[-2:]:
                    self._log({"type": "month", **row.as_dict()})

        summary = {
            "events": self.events_resolved,
            "solves": {f.name: f.solves for f in self.fleets},
            "solve_seconds": {f.name: round(f.solve_seconds, 3) for f in self.fleets},
        }
        self._log({"type": "end", **summary})
        return SimulationResult(rows=self.rows, log_lines=self.log_lines,
                                events=self.events_resolved, summary=summary)


def _station_hours(action, records, config: ScenarioConfig) -> float:
    """Station time consumed by the actions started this tick."""
    hours = 0.0
    for l in np.flatnonzero(action.repair_vehicle):
        hours += config.vehicle_repair_hours(records[l].damaged_components)
    for l in np.flatnonzero(action.disassemble_damaged):
        hours += config.disassembly_hours(records[l].vehicle_type)
    for i in np.flatnonzero(action.repair_component):
        hours += float(action.repair_component[i]) * float(config.component_repair_hours[i])
    for k in np.flatnonzero(action.assemble):
        hours += float(action.assemble[k]) * config.assembly_hours(k)
    for k in np.flatnonzero(action.disassemble):
        hours += float(action.disassemble[k]) * config.disassembly_hours(k)
    for k, k2 in zip(*np.nonzero(action.reconfigure)):
        hours += float(action.reconfigure[k, k2]) * config.reconfig_hours(int(k), int(k2))
    return hours


def run_simulation(config: ScenarioConfig,
                   log_path: str | Path | None = None) -> SimulationResult:
    """Run the full scenario; optionally persist the JSON-lines run log."""
    engine = SimulationEngine(config)
    result = engine.run()
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w") as fh:
            for line in result.log_lines:
                fh.write(line + "\n")
    return result


def load_log(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
