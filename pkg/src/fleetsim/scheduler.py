"""Receding-horizon planner: assemble the per-tick fleet MIP and solve it.

Decision variables are the operational actions over the planning horizon plus
the positive/negative split of each order remainder. Constraints: stocks stay
non-negative at every future hour, per-hour action starts respect the station
capacity, each damaged vehicle takes at most one recovery action, and the
remainder split balances orders against dispatched attributes.

A dominance presolve (guarded by explicit cost inequalities, so exotic cost
configs fall back to the full model) drops variables that can never pay off:
dispatching when no order is due, and shop actions whose completion cannot
serve any order in the window nor any later consumer of their output. The
presolved model provably shares its optimum with the full one; tests compare
both on randomized scenarios.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (
    KIND_MODULAR,
    N_ATTRIBUTES,
    ScenarioConfig,
    SolverConfig,
)
from .dynamics import (
    ActionVector,
    InventoryState,
    PendingActions,
    StateLayout,
    _slot_set,
    action_layout,
    slot_effects,
)
from .mip import MipProblem, MipSolution, SolveBudget, solve_mip


class SchedulerError(ValueError):
    pass


@dataclass
class PlanInfo:
    fast_path: bool = False
    status: str = "noop"
    objective: float = 0.0
    nodes: int = 0
    cuts: int = 0
    lp_iterations: int = 0
    solve_seconds: float = 0.0
    n_variables: int = 0


@dataclass
class FleetMipMeta:
    var_slots: list[tuple]          # (slot, tick) per action column
    n_actions: int
    tp: int
    deadline_ticks: list[int]
    aux_index: dict = field(default_factory=dict)  # (tick, attr) -> (ip_col, im_col)
    slot_members: dict = field(default_factory=dict)  # ("repair", rep) -> record idxs


def _stock_coord(layout: StateLayout, coord: int) -> tuple[str, int] | None:
    """Map a state coordinate to the compact stock space [I_v, I_c, I_dc]."""
    if layout.sl_vehicles.start <= coord < layout.sl_vehicles.stop:
        return ("stock", coord - layout.sl_vehicles.start)
    if layout.sl_components.start <= coord < layout.sl_components.stop:
        return ("stock", layout.n_v + (coord - layout.sl_components.start))
    if layout.sl_damaged_components.start <= coord < layout.sl_damaged_components.stop:
        return ("stock", layout.n_v + layout.n_c
                + (coord - layout.sl_damaged_components.start))
    if layout.sl_damaged_vehicles.start <= coord < layout.sl_damaged_vehicles.stop:
        return ("record", coord - layout.sl_damaged_vehicles.start)
    if layout.sl_order.start <= coord < layout.sl_order.stop:
        return ("order", coord - layout.sl_order.start)
    return None


def presolve_guards_hold(config: ScenarioConfig) -> bool:
    """Cost inequalities that make the variable-dropping rules lossless."""
    costs = config.costs
    tp = config.planning_horizon_hours
    rate = costs.action_cost_per_hour
    h_c = costs.holding_healthy_component
    for k in range(config.n_vehicle_types):
        n_k = config.vehicles[k].component_count
        h_v = costs.holding_healthy_vehicle_per_component * n_k
        attr_sum = float(config.vehicles[k].attributes.sum())
        if costs.redundancy_per_attribute * attr_sum <= h_v * tp:
            return False  # unsolicited dispatch could pay for itself
        comp_hold = h_c * n_k
        if rate * config.assembly_hours(k) < comp_hold * tp:
            return False  # assembling purely for holding could pay
        if rate * config.disassembly_hours(k) < h_v * tp:
            return False
        for k2 in range(config.n_vehicle_types):
            if k2 == k:
                continue
            n_k2 = config.vehicles[k2].component_count
            if rate * config.reconfig_hours(k, k2) < (h_v + h_c * n_k2) * tp:
                return False
    return True


def _alive_mask(config: ScenarioConfig, kind: str, inv: InventoryState,
                pending: PendingActions, deadline_ticks: list[int], tp: int,
                layout_slots: tuple[tuple, ...], presolve: bool) -> dict:
    """Ticks at which each action slot stays a decision variable."""
    all_ticks = list(range(tp))
    alive: dict[tuple, list[int]] = {}
    if not presolve:
        for slot in layout_slots:
            alive[slot] = all_ticks
        return alive

    last_deadline = max(deadline_ticks) if deadline_ticks else -1

    # Consumers of healthy components: assemblies & reconfigs that can still
    # serve an order, and vehicle repairs (always alive). Providers stay alive
    # only if a consumer can start at or after their completion. A completion
    # landing one state after a consumption nets against it (the plant applies
    # both in the same transition), hence the +1 slack in every window.
    consumer_ticks: list[int] = []
    for slot in layout_slots:
        if slot[0] == "assemble":
            ticks = [t for t in all_ticks
                     if t + config.assembly_hours(slot[1]) <= last_deadline + 1]
            alive[slot] = ticks
            consumer_ticks += ticks
        elif slot[0] == "reconfig":
            ticks = [t for t in all_ticks
                     if t + config.reconfig_hours(slot[1], slot[2]) <= last_deadline + 1]
            alive[slot] = ticks
            consumer_ticks += ticks
        elif slot[0] == "repair":
            alive[slot] = all_ticks
            consumer_ticks += all_ticks
    last_consumer = max(consumer_ticks) if consumer_ticks else -1

    # Damaged components reachable inside the window: stock now, inside
    # records, or released by recoveries already in flight.
    damaged_types = inv.damaged_components.copy()
    for rec in inv.damaged_vehicles:
        damaged_types = damaged_types + rec.damaged_components
    for effect in pending.effects:
        damaged_types = damaged_types + effect.damaged_components_delta

    for slot in layout_slots:
        tag = slot[0]
        if slot in alive:
            continue
        if tag == "dispatch":
            alive[slot] = list(deadline_ticks)
        elif tag == "scrap":
            alive[slot] = all_ticks
        elif tag == "disassemble":
            tau = config.disassembly_hours(slot[1])
            alive[slot] = [t for t in all_ticks if t + tau <= last_consumer + 1]
        elif tag == "comp":
            alive[slot] = all_ticks if damaged_types[slot[1]] > 0 else []
        else:
            raise SchedulerError(f"unknown slot {slot!r}")
    return alive


def build_fleet_mip(inv: InventoryState, pending: PendingActions, t: int,
                    order_window: np.ndarray, known_returns: list,
                    config: ScenarioConfig, kind: str,
                    presolve: bool = True) -> tuple[MipProblem, FleetMipMeta]:
    """Assemble the horizon MIP for one fleet at hour t.

    ``order_window``: (tp, 3) attributes to dispatch at offsets 0..tp-1.
    ``known_returns``: (wall_tick, healthy_vehicle_counts) pairs already in
    transit; they enter the stock projection, not the decisions.
    """
    tp = config.planning_horizon_hours
    n_v, n_c = config.n_vehicle_types, config.n_component_types
    records = inv.damaged_vehicles
    n_dv = len(records)
    costs = config.costs
    if order_window.shape != (tp, N_ATTRIBUTES):
        raise SchedulerError("order window must be (planning_horizon, attributes)")

    layout = StateLayout(n_v=n_v, n_c=n_c, record_uids=tuple(r.uid for r in records))
    act = action_layout(kind, n_v, n_c, n_dv)
    deadline_ticks = [j for j in range(tp) if order_window[j].any()]
    use_presolve = presolve and presolve_guards_hold(config)
    alive = _alive_mask(config, kind, inv, pending, deadline_ticks, tp,
                        act.slots, use_presolve)

    # Interchangeable damaged records (same type, same damage pattern)
    # collapse into one class-count variable per recovery kind and tick;
    # permutation symmetry makes this lossless. Only under presolve, so the
    # full model keeps the literal per-record form for comparison.
    classes: list[tuple[int, list[int]]] = []   # (representative, members)
    if use_presolve:
        by_key: dict[tuple, list[int]] = {}
        for idx, rec in enumerate(records):
            key = (rec.vehicle_type, tuple(rec.damaged_components.tolist()))
            by_key.setdefault(key, []).append(idx)
        classes = [(members[0], members) for members in by_key.values()]

    # Variable list: one column per (slot, tick) kept alive.
    slot_eff: dict[tuple, list] = {}
    slot_cost: dict[tuple, float] = {}
    collapsed: set[tuple] = set()
    slot_members: dict[tuple, list[int]] = {}
    for slot in act.slots:
        slot_eff[slot] = slot_effects(slot, records, config, layout)
        slot_cost[slot] = _action_cost(slot, records, config)
    if use_presolve:
        for rep, members in classes:
            for tag in ("repair", "scrap"):
                base_slot = (tag, rep)
                if base_slot not in slot_eff:
                    continue
                slot_members[base_slot] = members
                for other in members[1:]:
                    collapsed.add((tag, other))
        # A class variable consumes/releases like its representative except
        # the record indicator, which the class cap row replaces.
        for slot, members in slot_members.items():
            slot_eff[slot] = [(d, coord, val) for d, coord, val in slot_eff[slot]
                              if _stock_coord(layout, coord)[0] != "record"]
    var_slots = []
    for tick in range(tp):
        for slot in act.slots:
            if slot in collapsed:
                continue
            if tick in alive[slot]:
                var_slots.append((slot, tick))
    n_act = len(var_slots)

    aux_ticks = deadline_ticks if use_presolve else list(range(tp))
    n_aux = len(aux_ticks) * N_ATTRIBUTES
    n_vars = n_act + 2 * n_aux
    ip_base = n_act
    im_base = n_act + n_aux

    S = n_v + 2 * n_c
    h_stock = np.concatenate([
        np.array([costs.holding_healthy_vehicle_per_component
                  * config.vehicles[k].component_count for k in range(n_v)]),
        np.full(n_c, costs.holding_healthy_component),
        np.full(n_c, costs.holding_damaged_component),
    ])

    # Stock projection with no new actions: current stocks plus completions
    # plus known healthy returns.
    base = np.zeros((tp + 1, S))
    start = np.concatenate([inv.vehicles, inv.components,
                            inv.damaged_components]).astype(np.float64)
    base[:] = start
    for effect in pending.effects:
        off = effect.completion_time - t
        if off < 1:
            continue
        delta = np.concatenate([effect.vehicles_delta, effect.components_delta,
                                effect.damaged_components_delta]).astype(np.float64)
        if off <= tp:
            base[off:] += delta
    for wall_tick, counts in known_returns:
        off = wall_tick - t + 1
        if off < 1:
            raise SchedulerError("known return in the past")
        if off <= tp:
            base[off:, :n_v] += counts

    # Cumulative effect of each action column on each projected stock.
    cum = np.zeros((tp + 1, S, n_vars))
    recovery_cols: dict[int, list[int]] = {}   # class/record key -> columns
    recovery_caps: dict[int, float] = {}
    class_of_record = {}
    for rep, members in classes:
        for m in members:
            class_of_record[m] = rep
    record_start_save = np.zeros(n_vars)
    attr_cols = np.zeros((len(aux_ticks), N_ATTRIBUTES, n_vars))
    aux_pos = {tick: i for i, tick in enumerate(aux_ticks)}
    obj = np.zeros(n_vars)
    for col, (slot, tick) in enumerate(var_slots):
        obj[col] += slot_cost[slot]
        for d, coord, val in slot_eff[slot]:
            mapped = _stock_coord(layout, coord)
            land = tick + d
            if mapped is None:
                continue
            kind_tag, idx = mapped
            if kind_tag == "stock":
                if land <= tp:
                    cum[land:, idx, col] += val
            elif kind_tag == "order":
                if d == 1 and tick in aux_pos:
                    attr_cols[aux_pos[tick], idx, col] += val
        if slot[0] in ("repair", "scrap"):
            l = slot[1]
            key = class_of_record.get(l, l)
            recovery_cols.setdefault(key, []).append(col)
            size = len(slot_members.get(("repair", key), [None]))
            recovery_caps[key] = float(size) if use_presolve else 1.0
            h_dv = costs.holding_damaged_vehicle_per_component * \
                int((records[l].damaged_components + records[l].healthy_components).sum())
            record_start_save[col] = h_dv * (tp - tick)

    # Objective: order mismatch, action costs, holding.
    obj -= record_start_save
    hold_coef = np.einsum("s,tsv->v", h_stock, cum[1:])
    obj += hold_coef
    offset = float(h_stock @ base[1:].sum(axis=0))
    for rec in records:
        h_dv = costs.holding_damaged_vehicle_per_component * \
            int((rec.damaged_components + rec.healthy_components).sum())
        offset += h_dv * tp

    c_vec = np.zeros(n_vars)
    c_vec[:n_act] = obj[:n_act]
    for i, tick in enumerate(aux_ticks):
        for h in range(N_ATTRIBUTES):
            c_vec[ip_base + i * N_ATTRIBUTES + h] = costs.insufficiency_per_attribute
            c_vec[im_base + i * N_ATTRIBUTES + h] = costs.redundancy_per_attribute

    # Inequalities: stock non-negativity, station capacity, recovery choice.
    rows = []
    rhs = []
    for i in range(1, tp + 1):
        neg = cum[i].min(axis=1) < 0
        for s_idx in np.flatnonzero(neg):
            row = np.zeros(n_vars)
            row[:] = -cum[i, s_idx, :]
            rows.append(row)
            rhs.append(base[i, s_idx])
    cap = float(config.station_capacity)
    tick_cols: dict[int, list[int]] = {}
    for col, (slot, tick) in enumerate(var_slots):
        tick_cols.setdefault(tick, []).append(col)
    for tick in sorted(tick_cols):
        row = np.zeros(n_vars)
        row[tick_cols[tick]] = 1.0
        rows.append(row)
        rhs.append(cap)
    for key in sorted(recovery_cols):
        row = np.zeros(n_vars)
        row[recovery_cols[key]] = 1.0
        rows.append(row)
        rhs.append(recovery_caps[key])

    # Equalities: remainder split per order tick.
    eq_rows = []
    eq_rhs = []
    for i, tick in enumerate(aux_ticks):
        for h in range(N_ATTRIBUTES):
            row = np.zeros(n_vars)
            row[:n_act] = -attr_cols[i, h, :n_act]   # +M_va . o_v
            row[ip_base + i * N_ATTRIBUTES + h] = 1.0
            row[im_base + i * N_ATTRIBUTES + h] = -1.0
            eq_rows.append(row)
            eq_rhs.append(float(order_window[tick, h]))

    lb = np.zeros(n_vars)
    ub = np.empty(n_vars)
    int_mask = np.zeros(n_vars, dtype=bool)
    max_attr = config.vehicle_attributes.max(axis=0)
    for col, (slot, tick) in enumerate(var_slots):
        int_mask[col] = True
        if slot[0] in ("repair", "scrap"):
            ub[col] = float(len(slot_members.get(("repair", slot[1]), [None])))
        else:
            ub[col] = cap
    for i, tick in enumerate(aux_ticks):
        for h in range(N_ATTRIBUTES):
            ub[ip_base + i * N_ATTRIBUTES + h] = float(order_window[tick, h])
            ub[im_base + i * N_ATTRIBUTES + h] = cap * float(max_attr[h])

    problem = MipProblem(
        c=c_vec,
        A_ub=np.array(rows) if rows else None,
        b_ub=np.array(rhs) if rows else None,
        A_eq=np.array(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rows else None,
        lb=lb, ub=ub, integer_mask=int_mask, objective_offset=offset,
    )
    meta = FleetMipMeta(var_slots=var_slots, n_actions=n_act, tp=tp,
                        deadline_ticks=deadline_ticks,
                        aux_index={(tick, h): (ip_base + i * N_ATTRIBUTES + h,
                                               im_base + i * N_ATTRIBUTES + h)
                                   for i, tick in enumerate(aux_ticks)
                                   for h in range(N_ATTRIBUTES)},
                        slot_members=slot_members)
    return problem, meta


def _action_cost(slot: tuple, records, config: ScenarioConfig) -> float:
    rate = config.costs.action_cost_per_hour
    tag = slot[0]
    if tag == "dispatch":
        return 0.0
    if tag == "repair":
        return rate * config.vehicle_repair_hours(records[slot[1]].damaged_components)
    if tag == "comp":
        return rate * float(config.component_repair_hours[slot[1]])
    if tag == "assemble":
        return rate * config.assembly_hours(slot[1])
    if tag == "disassemble":
        return rate * config.disassembly_hours(slot[1])
    if tag == "reconfig":
        return rate * config.reconfig_hours(slot[1], slot[2])
    if tag == "scrap":
        return rate * config.disassembly_hours(records[slot[1]].vehicle_type)
    raise SchedulerError(f"unknown slot {slot!r}")


def extract_first_tick(solution: MipSolution, meta: FleetMipMeta,
                       n_v: int, n_c: int, n_dv: int) -> ActionVector:
    action = ActionVector.noop(n_v, n_c, n_dv)
    class_used: dict[int, int] = {}
    for col, (slot, tick) in enumerate(meta.var_slots):
        if tick != 0:
            continue
        value = int(round(float(solution.x[col])))
        if not value:
            continue
        members = meta.slot_members.get(("repair", slot[1])) \
            if slot[0] in ("repair", "scrap") else None
        if members is not None:
            # Class count: mark the next `value` untouched records.
            start = class_used.get(slot[1], 0)
            target = (action.repair_vehicle if slot[0] == "repair"
                      else action.disassemble_damaged)
            for l in members[start:start + value]:
                target[l] = 1
            class_used[slot[1]] = start + value
        else:
            _slot_set(action, slot, value)
    return action


def plan_actions(inv: InventoryState, pending: PendingActions, t: int,
                 order_window: np.ndarray, known_returns: list,
                 config: ScenarioConfig, kind: str,
                 presolve: bool = True) -> tuple[ActionVector, PlanInfo]:
    """One receding-horizon step: plan over the window, return the first tick.

    Skips the solver entirely when nothing can beat a no-op: empty order
    window, no damaged stock of any kind (fast path, provably optimal under
    the presolve guards).
    """
    import time as _time
    n_v, n_c = config.n_vehicle_types, config.n_component_types
    n_dv = len(inv.damaged_vehicles)
    info = PlanInfo()
    idle = (not order_window.any() and n_dv == 0
            and not inv.damaged_components.any())
    if idle and presolve and presolve_guards_hold(config):
        info.fast_path = True
        return ActionVector.noop(n_v, n_c, n_dv), info

    start = _time.perf_counter()
    problem, meta = build_fleet_mip(inv, pending, t, order_window,
                                    known_returns, config, kind, presolve)
    budget = SolveBudget(max_nodes=config.solver.max_nodes,
                         max_lp_iterations=config.solver.max_lp_iterations,
                         wall_time_limit=config.solver.wall_time_limit)
    solution = solve_mip(problem, budget,
                         gomory_rounds=config.solver.gomory_rounds,
                         gomory_max_cuts=config.solver.gomory_max_cuts,
                         branch_up_first=config.solver.branch_up_first)
    info.solve_seconds = _time.perf_counter() - start
    info.status = solution.status
    info.nodes = solution.nodes
    info.cuts = solution.cuts
    info.lp_iterations = solution.lp_iterations
    info.n_variables = problem.n_vars
    if solution.status == "infeasible":
        raise SchedulerError("fleet plan infeasible; giving up is always feasible")
    if solution.status == "budget_limited" and not np.isfinite(solution.objective):
        # Budget ran out before any incumbent: fall back to standing still.
        return ActionVector.noop(n_v, n_c, n_dv), info
    info.objective = float(solution.objective)
    return extract_first_tick(solution, meta, n_v, n_c, n_dv), info
