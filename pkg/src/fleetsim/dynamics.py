"""Inventory dynamics for both fleet kinds.

State per fleet: healthy vehicle stocks, healthy component stocks, one slot
per active damaged-vehicle record, damaged component stocks, and the latest
order remainder. Actions consume stock immediately; everything an action
produces lands later through the pending queue, whose entries also carry the
components tied up in the shop so global conservation is checkable hour by
hour.

All stock arithmetic is integer (int64); the order remainder is float.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (
    KIND_CONVENTIONAL,
    KIND_MODULAR,
    N_ATTRIBUTES,
    ScenarioConfig,
)


class DynamicsError(ValueError):
    pass


class InfeasibleActionError(DynamicsError):
    """An action would drive a named stock negative."""


@dataclass
class DamagedVehicleRecord:
    """One damaged vehicle awaiting recovery. Uids are never reused."""

    uid: int
    vehicle_type: int
    damaged_components: np.ndarray    # int64 (n_component_types,)
    healthy_components: np.ndarray    # int64 (n_component_types,)
    active: bool = True

    def validate(self, config: ScenarioConfig) -> None:
        expected = config.vehicles[self.vehicle_type].components
        if not np.array_equal(self.damaged_components + self.healthy_components, expected):
            raise DynamicsError(
                f"damaged record {self.uid}: component split does not match type "
                f"{self.vehicle_type}")

    def copy(self) -> "DamagedVehicleRecord":
        return DamagedVehicleRecord(self.uid, self.vehicle_type,
                                    self.damaged_components.copy(),
                                    self.healthy_components.copy(), self.active)


@dataclass
class InventoryState:
    vehicles: np.ndarray              # int64 (n_v,)
    components: np.ndarray            # int64 (n_c,)
    damaged_vehicles: list[DamagedVehicleRecord]   # active records only
    damaged_components: np.ndarray    # int64 (n_c,)
    order_remainder: np.ndarray       # float64 (N_ATTRIBUTES,)

    def copy(self) -> "InventoryState":
        return InventoryState(self.vehicles.copy(), self.components.copy(),
                              [r.copy() for r in self.damaged_vehicles],
                              self.damaged_components.copy(),
                              self.order_remainder.copy())


def initial_inventory(config: ScenarioConfig) -> InventoryState:
    n_v, n_c = config.n_vehicle_types, config.n_component_types
    return InventoryState(
        vehicles=np.full(n_v, config.initial_vehicle_stock, dtype=np.int64),
        components=np.full(n_c, config.initial_component_stock, dtype=np.int64),
        damaged_vehicles=[],
        damaged_components=np.zeros(n_c, dtype=np.int64),
        order_remainder=np.zeros(N_ATTRIBUTES, dtype=np.float64),
    )


@dataclass
class PendingEffect:
    completion_time: int
    vehicles_delta: np.ndarray
    components_delta: np.ndarray
    damaged_components_delta: np.ndarray
    in_flight_components: np.ndarray   # components tied up until completion


class PendingActions:
    """Queue of delayed action effects, ordered by insertion."""

    def __init__(self):
        self.effects: list[PendingEffect] = []

    def add(self, effect: PendingEffect) -> None:
        self.effects.append(effect)

    def pop_due(self, time: int) -> list[PendingEffect]:
        due = [e for e in self.effects if e.completion_time <= time]
        self.effects = [e for e in self.effects if e.completion_time > time]
        return due

    def copy(self) -> "PendingActions":
        out = PendingActions()
        out.effects = [PendingEffect(e.completion_time, e.vehicles_delta.copy(),
                                     e.components_delta.copy(),
                                     e.damaged_components_delta.copy(),
                                     e.in_flight_components.copy())
                       for e in self.effects]
        return out

    def in_flight_components(self, n_component_types: int) -> np.ndarray:
        total = np.zeros(n_component_types, dtype=np.int64)
        for e in self.effects:
            total += e.in_flight_components
        return total


@dataclass
class ActionVector:
    """One tick's operational decision. ADR parts stay zero for conventional."""

    dispatch: np.ndarray              # int64 (n_v,)
    repair_vehicle: np.ndarray        # int64 (n_dv,) binary, positional
    repair_component: np.ndarray      # int64 (n_c,)
    assemble: np.ndarray              # int64 (n_v,)
    disassemble: np.ndarray           # int64 (n_v,)
    reconfigure: np.ndarray           # int64 (n_v, n_v), [source, target]
    disassemble_damaged: np.ndarray   # int64 (n_dv,) binary, positional

    @staticmethod
    def noop(n_v: int, n_c: int, n_dv: int) -> "ActionVector":
        return ActionVector(
            dispatch=np.zeros(n_v, dtype=np.int64),
            repair_vehicle=np.zeros(n_dv, dtype=np.int64),
            repair_component=np.zeros(n_c, dtype=np.int64),
            assemble=np.zeros(n_v, dtype=np.int64),
            disassemble=np.zeros(n_v, dtype=np.int64),
            reconfigure=np.zeros((n_v, n_v), dtype=np.int64),
            disassemble_damaged=np.zeros(n_dv, dtype=np.int64),
        )

    @property
    def is_noop(self) -> bool:
        return self.total_starts == 0

    @property
    def total_starts(self) -> int:
        return int(self.dispatch.sum() + self.repair_vehicle.sum()
                   + self.repair_component.sum() + self.assemble.sum()
                   + self.disassemble.sum() + self.reconfigure.sum()
                   + self.disassemble_damaged.sum())

    def adr_is_zero(self) -> bool:
        return not (self.assemble.any() or self.disassemble.any()
                    or self.reconfigure.any() or self.disassemble_damaged.any())

    def validate(self, n_dv: int) -> None:
        arrays = [self.dispatch, self.repair_vehicle, self.repair_component,
                  self.assemble, self.disassemble, self.reconfigure,
                  self.disassemble_damaged]
        for arr in arrays:
            if (arr < 0).any():
                raise DynamicsError("action entries must be >= 0")
        if len(self.repair_vehicle) != n_dv or len(self.disassemble_damaged) != n_dv:
            raise DynamicsError("repair vectors must match the active record count")
        if ((self.repair_vehicle + self.disassemble_damaged) > 1).any():
            raise DynamicsError("each damaged vehicle takes at most one recovery action")
        if np.diagonal(self.reconfigure).any():
            raise DynamicsError("reconfiguration requires distinct source and target types")


@dataclass
class Arrivals:
    """Exogenous inputs for one tick: returns and the current dispatch order."""

    healthy_vehicles: np.ndarray                      # int64 (n_v,)
    damaged_vehicles: list[DamagedVehicleRecord] = field(default_factory=list)
    order: np.ndarray = None                          # float64 (N_ATTRIBUTES,)

    @staticmethod
    def none(n_v: int) -> "Arrivals":
        return Arrivals(healthy_vehicles=np.zeros(n_v, dtype=np.int64),
                        damaged_vehicles=[],
                        order=np.zeros(N_ATTRIBUTES, dtype=np.float64))


def _check_nonnegative(name_values: list[tuple[str, np.ndarray, list[str]]]) -> None:
    for label, arr, names in name_values:
        bad = np.flatnonzero(arr < 0)
        if bad.size:
            i = int(bad[0])
            raise InfeasibleActionError(
                f"{label} '{names[i]}' would go negative ({int(arr[i])})")


def step_fleet(inv: InventoryState, action: ActionVector, arrivals: Arrivals,
               pending: PendingActions, t: int, config: ScenarioConfig,
               kind: str) -> InventoryState:
    """Advance one hour: apply an action at t and return the state at t+1.

    Immediate consumption lands in the returned state; everything produced
    later is queued on ``pending``. Completions already queued for t+1 are
    applied here too. The step is atomic: a rejected action leaves the
    pending queue untouched.
    """
    n_v, n_c = config.n_vehicle_types, config.n_component_types
    records = inv.damaged_vehicles
    action.validate(len(records))
    if kind == KIND_CONVENTIONAL and not action.adr_is_zero():
        raise DynamicsError("conventional fleets cannot assemble, disassemble or reconfigure")
    elif kind not in (KIND_CONVENTIONAL, KIND_MODULAR):
        raise DynamicsError(f"unknown fleet kind {kind!r}")

    M_vc = config.vehicle_components
    vehicles = inv.vehicles.astype(np.int64).copy()
    components = inv.components.copy()
    damaged_components = inv.damaged_components.copy()

    # Immediate consumption.
    recfg_out = action.reconfigure.sum(axis=1)
    recfg_in = action.reconfigure.sum(axis=0)
    vehicles -= action.dispatch + action.disassemble + recfg_out
    components -= M_vc.T @ (action.assemble + recfg_in)
    damaged_components -= action.repair_component

    new_effects: list[PendingEffect] = []
    survivors: list[DamagedVehicleRecord] = []
    for pos, rec in enumerate(records):
        repair = int(action.repair_vehicle[pos])
        scrap = int(action.disassemble_damaged[pos])
        if repair:
            components -= rec.damaged_components   # spares swapped in now
            tau = config.vehicle_repair_hours(rec.damaged_components)
            new_effects.append(PendingEffect(
                completion_time=t + tau,
                vehicles_delta=_one_hot(n_v, rec.vehicle_type),
                components_delta=np.zeros(n_c, dtype=np.int64),
                damaged_components_delta=rec.damaged_components.copy(),
                in_flight_components=rec.healthy_components + 2 * rec.damaged_components,
            ))
        elif scrap:
            tau = config.disassembly_hours(rec.vehicle_type)
            new_effects.append(PendingEffect(
                completion_time=t + tau,
                vehicles_delta=np.zeros(n_v, dtype=np.int64),
                components_delta=rec.healthy_components.copy(),
                damaged_components_delta=rec.damaged_components.copy(),
                in_flight_components=rec.healthy_components + rec.damaged_components,
            ))
        else:
            survivors.append(rec)

    # Delayed production from this tick's actions.
    for i in np.flatnonzero(action.repair_component):
        count = int(action.repair_component[i])
        delta = np.zeros(n_c, dtype=np.int64)
        delta[i] = count
        new_effects.append(PendingEffect(t + int(config.component_repair_hours[i]),
                                  np.zeros(n_v, dtype=np.int64), delta,
                                  np.zeros(n_c, dtype=np.int64), delta.copy()))
    for k in np.flatnonzero(action.assemble):
        count = int(action.assemble[k])
        new_effects.append(PendingEffect(t + config.assembly_hours(k),
                                  count * _one_hot(n_v, k),
                                  np.zeros(n_c, dtype=np.int64),
                                  np.zeros(n_c, dtype=np.int64),
                                  count * M_vc[k]))
    for k in np.flatnonzero(action.disassemble):
        count = int(action.disassemble[k])
        new_effects.append(PendingEffect(t + config.disassembly_hours(k),
                                  np.zeros(n_v, dtype=np.int64),
                                  count * M_vc[k],
                                  np.zeros(n_c, dtype=np.int64),
                                  count * M_vc[k]))
    for k, k2 in zip(*np.nonzero(action.reconfigure)):
        count = int(action.reconfigure[k, k2])
        new_effects.append(PendingEffect(t + config.reconfig_hours(int(k), int(k2)),
                                  count * _one_hot(n_v, int(k2)),
                                  count * M_vc[int(k)],
                                  np.zeros(n_c, dtype=np.int64),
                                  count * (M_vc[int(k)] + M_vc[int(k2)])))

    # Completions landing at t+1, then exogenous arrivals.
    due_now = [e for e in pending.effects + new_effects
               if e.completion_time <= t + 1]
    for effect in due_now:
        vehicles += effect.vehicles_delta
        components += effect.components_delta
        damaged_components += effect.damaged_components_delta
    vehicles += arrivals.healthy_vehicles

    comp_names = [c.name for c in config.components]
    veh_names = [v.name for v in config.vehicles]
    _check_nonnegative([
        ("vehicle stock", vehicles, veh_names),
        ("component stock", components, comp_names),
        ("damaged component stock", damaged_components, comp_names),
    ])

    # All checks passed: commit the queue mutation.
    for effect in new_effects:
        pending.add(effect)
    pending.pop_due(t + 1)

    order = arrivals.order if arrivals.order is not None else np.zeros(N_ATTRIBUTES)
    remainder = order.astype(np.float64) - config.vehicle_attributes.T @ action.dispatch

    new_records = survivors + [r for r in arrivals.damaged_vehicles]
    for rec in arrivals.damaged_vehicles:
        rec.validate(config)
    return InventoryState(vehicles, components, new_records, damaged_components,
                          remainder)


def step_conventional(inv, action, arrivals, pending, t, config) -> InventoryState:
    return step_fleet(inv, action, arrivals, pending, t, config, KIND_CONVENTIONAL)


def step_modular(inv, action, arrivals, pending, t, config) -> InventoryState:
    return step_fleet(inv, action, arrivals, pending, t, config, KIND_MODULAR)


def _one_hot(n: int, i: int) -> np.ndarray:
    v = np.zeros(n, dtype=np.int64)
    v[i] = 1
    return v


# --- state-space form -------------------------------------------------------

@dataclass(frozen=True)
class StateLayout:
    """Coordinate map of one state block."""

    n_v: int
    n_c: int
    record_uids: tuple[int, ...]

    @property
    def n_dv(self) -> int:
        return len(self.record_uids)

    @property
    def n_state(self) -> int:
        return self.n_v + 2 * self.n_c + self.n_dv + N_ATTRIBUTES

    @property
    def sl_vehicles(self) -> slice:
        return slice(0, self.n_v)

    @property
    def sl_components(self) -> slice:
        return slice(self.n_v, self.n_v + self.n_c)

    @property
    def sl_damaged_vehicles(self) -> slice:
        base = self.n_v + self.n_c
        return slice(base, base + self.n_dv)

    @property
    def sl_damaged_components(self) -> slice:
        base = self.n_v + self.n_c + self.n_dv
        return slice(base, base + self.n_c)

    @property
    def sl_order(self) -> slice:
        base = self.n_v + 2 * self.n_c + self.n_dv
        return slice(base, base + N_ATTRIBUTES)

    @property
    def stock_indices(self) -> np.ndarray:
        """Every coordinate that must stay non-negative."""
        return np.arange(0, self.n_state - N_ATTRIBUTES)


@dataclass(frozen=True)
class ActionLayout:
    """Column map of the action vector for one fleet kind."""

    kind: str
    n_v: int
    n_c: int
    n_dv: int
    slots: tuple[tuple, ...]      # ("dispatch", k), ("repair", l), ("comp", i),
                                  # ("assemble", k), ("disassemble", k),
                                  # ("reconfig", k, k2), ("scrap", l)

    @property
    def n_action(self) -> int:
        return len(self.slots)

    def pack(self, action: ActionVector) -> np.ndarray:
        out = np.zeros(self.n_action, dtype=np.int64)
        for j, slot in enumerate(self.slots):
            out[j] = _slot_get(action, slot)
        return out

    def unpack(self, values: np.ndarray) -> ActionVector:
        action = ActionVector.noop(self.n_v, self.n_c, self.n_dv)
        for j, slot in enumerate(self.slots):
            _slot_set(action, slot, int(round(float(values[j]))))
        return action


def _slot_get(action: ActionVector, slot: tuple) -> int:
    tag = slot[0]
    if tag == "dispatch":
        return int(action.dispatch[slot[1]])
    if tag == "repair":
        return int(action.repair_vehicle[slot[1]])
    if tag == "comp":
        return int(action.repair_component[slot[1]])
    if tag == "assemble":
        return int(action.assemble[slot[1]])
    if tag == "disassemble":
        return int(action.disassemble[slot[1]])
    if tag == "reconfig":
        return int(action.reconfigure[slot[1], slot[2]])
    if tag == "scrap":
        return int(action.disassemble_damaged[slot[1]])
    raise DynamicsError(f"unknown action slot {slot!r}")


def _slot_set(action: ActionVector, slot: tuple, value: int) -> None:
    tag = slot[0]
    if tag == "dispatch":
        action.dispatch[slot[1]] = value
    elif tag == "repair":
        action.repair_vehicle[slot[1]] = value
    elif tag == "comp":
        action.repair_component[slot[1]] = value
    elif tag == "assemble":
        action.assemble[slot[1]] = value
    elif tag == "disassemble":
        action.disassemble[slot[1]] = value
    elif tag == "reconfig":
        action.reconfigure[slot[1], slot[2]] = value
    elif tag == "scrap":
        action.disassemble_damaged[slot[1]] = value
    else:
        raise DynamicsError(f"unknown action slot {slot!r}")


def action_layout(kind: str, n_v: int, n_c: int, n_dv: int) -> ActionLayout:
    slots: list[tuple] = []
    slots += [("dispatch", k) for k in range(n_v)]
    slots += [("repair", l) for l in range(n_dv)]
    slots += [("comp", i) for i in range(n_c)]
    if kind == KIND_MODULAR:
        slots += [("assemble", k) for k in range(n_v)]
        slots += [("disassemble", k) for k in range(n_v)]
        slots += [("reconfig", k, k2) for k in range(n_v) for k2 in range(n_v) if k2 != k]
        slots += [("scrap", l) for l in range(n_dv)]
    return ActionLayout(kind=kind, n_v=n_v, n_c=n_c, n_dv=n_dv, slots=tuple(slots))


def slot_effects(slot: tuple, records: list[DamagedVehicleRecord],
                 config: ScenarioConfig, layout: StateLayout) -> list[tuple[int, int, float]]:
    """(delay, state_coordinate, value) triples for one unit of an action slot.

    Delay d means the effect is visible in the state d hours after the action
    is taken; immediate consumption has d = 1.
    """
    M_va, M_vc = config.vehicle_attributes, config.vehicle_components
    v0 = layout.sl_vehicles.start
    c0 = layout.sl_components.start
    dv0 = layout.sl_damaged_vehicles.start
    dc0 = layout.sl_damaged_components.start
    a0 = layout.sl_order.start
    tag = slot[0]
    effects: list[tuple[int, int, float]] = []
    if tag == "dispatch":
        k = slot[1]
        effects.append((1, v0 + k, -1.0))
        for h in range(N_ATTRIBUTES):
            if M_va[k, h] != 0.0:
                effects.append((1, a0 + h, -float(M_va[k, h])))
    elif tag == "repair":
        rec = records[slot[1]]
        tau = config.vehicle_repair_hours(rec.damaged_components)
        effects.append((1, dv0 + slot[1], -1.0))
        for i in np.flatnonzero(rec.damaged_components):
            effects.append((1, c0 + int(i), -float(rec.damaged_components[i])))
            effects.append((tau, dc0 + int(i), float(rec.damaged_components[i])))
        effects.append((tau, v0 + rec.vehicle_type, 1.0))
    elif tag == "comp":
        i = slot[1]
        effects.append((1, dc0 + i, -1.0))
        effects.append((int(config.component_repair_hours[i]), c0 + i, 1.0))
    elif tag == "assemble":
        k = slot[1]
        for i in np.flatnonzero(M_vc[k]):
            effects.append((1, c0 + int(i), -float(M_vc[k, i])))
        effects.append((config.assembly_hours(k), v0 + k, 1.0))
    elif tag == "disassemble":
        k = slot[1]
        effects.append((1, v0 + k, -1.0))
        for i in np.flatnonzero(M_vc[k]):
            effects.append((config.disassembly_hours(k), c0 + int(i), float(M_vc[k, i])))
    elif tag == "reconfig":
        k, k2 = slot[1], slot[2]
        tau = config.reconfig_hours(k, k2)
        effects.append((1, v0 + k, -1.0))
        for i in np.flatnonzero(M_vc[k2]):
            effects.append((1, c0 + int(i), -float(M_vc[k2, i])))
        effects.append((tau, v0 + k2, 1.0))
        for i in np.flatnonzero(M_vc[k]):
            effects.append((tau, c0 + int(i), float(M_vc[k, i])))
    elif tag == "scrap":
        rec = records[slot[1]]
        tau = config.disassembly_hours(rec.vehicle_type)
        effects.append((1, dv0 + slot[1], -1.0))
        for i in np.flatnonzero(rec.healthy_components):
            effects.append((tau, c0 + int(i), float(rec.healthy_components[i])))
        for i in np.flatnonzero(rec.damaged_components):
            effects.append((tau, dc0 + int(i), float(rec.damaged_components[i])))
    else:
        raise DynamicsError(f"unknown action slot {slot!r}")
    return effects


N_INPUTS_FIXED = N_ATTRIBUTES  # the order part of the input vector


def input_effects(layout: StateLayout) -> list[list[tuple[int, int, float]]]:
    """Effects of the input vector [healthy returns (n_v), order (3)]."""
    out = []
    for k in range(layout.n_v):
        out.append([(1, layout.sl_vehicles.start + k, 1.0)])
    for h in range(N_ATTRIBUTES):
        out.append([(1, layout.sl_order.start + h, 1.0)])
    return out


@dataclass
class SystemMatrices:
    """Time-varying state-space form for the current record set."""

    layout: StateLayout
    action: ActionLayout
    tau_max: int
    A: np.ndarray          # (n_stack, n_stack)
    B: np.ndarray          # (n_stack, n_action) stacked input map
    C: np.ndarray          # (n_stack, n_inputs)
    B_delay: np.ndarray    # (tau_max+1, n_state, n_action) per-delay effects
    C_delay: np.ndarray    # (tau_max+1, n_state, n_inputs)

    @property
    def n_state(self) -> int:
        return self.layout.n_state

    @property
    def n_stack(self) -> int:
        return self.layout.n_state * (self.tau_max + 1)


def build_state_space(inv: InventoryState, config: ScenarioConfig, kind: str,
                      tau_max: int | None = None) -> SystemMatrices:
    """Matrices such that one application reproduces one plant step exactly."""
    n_v, n_c = config.n_vehicle_types, config.n_component_types
    records = inv.damaged_vehicles
    layout = StateLayout(n_v=n_v, n_c=n_c, record_uids=tuple(r.uid for r in records))
    act = action_layout(kind, n_v, n_c, len(records))
    if tau_max is None:
        tau_max = config.tau_max
    n_s = layout.n_state

    B_delay = np.zeros((tau_max + 1, n_s, act.n_action))
    for j, slot in enumerate(act.slots):
        for d, coord, value in slot_effects(slot, records, config, layout):
            if d > tau_max:
                raise DynamicsError(f"action delay {d} exceeds stack depth {tau_max}")
            B_delay[d, coord, j] += value

    in_eff = input_effects(layout)
    C_delay = np.zeros((tau_max + 1, n_s, len(in_eff)))
    for j, eff in enumerate(in_eff):
        for d, coord, value in eff:
            C_delay[d, coord, j] += value

    order_rows = np.arange(layout.sl_order.start, layout.sl_order.stop)

    n_stack = n_s * (tau_max + 1)
    A = np.zeros((n_stack, n_stack))
    eye = np.eye(n_s)
    eye_hold = eye.copy()
    eye_hold[order_rows, :] = 0.0   # the order remainder is transient output
    for r in range(tau_max + 1):
        c = min(r + 1, tau_max)
        A[r * n_s:(r + 1) * n_s, c * n_s:(c + 1) * n_s] = eye_hold

    B = np.zeros((n_stack, act.n_action))
    C = np.zeros((n_stack, len(in_eff)))
    cum_b = np.zeros((n_s, act.n_action))
    cum_c = np.zeros((n_s, len(in_eff)))
    for j in range(tau_max + 1):
        d = j + 1
        if d <= tau_max:
            cum_b += B_delay[d]
            cum_c += C_delay[d]
        B[j * n_s:(j + 1) * n_s, :] = cum_b
        C[j * n_s:(j + 1) * n_s, :] = cum_c

    return SystemMatrices(layout=layout, action=act, tau_max=tau_max,
                          A=A, B=B, C=C, B_delay=B_delay, C_delay=C_delay)


def state_block(inv: InventoryState) -> np.ndarray:
    """Vectorize the live inventory as one state block."""
    n_dv = len(inv.damaged_vehicles)
    parts = [inv.vehicles.astype(np.float64),
             inv.components.astype(np.float64),
             np.ones(n_dv),
             inv.damaged_components.astype(np.float64),
             inv.order_remainder.astype(np.float64)]
    return np.concatenate(parts)


def stacked_state(inv: InventoryState, pending: PendingActions, t: int,
                  mats: SystemMatrices) -> np.ndarray:
    """Stack projected inventories for offsets 0..tau_max, pending included."""
    layout = mats.layout
    base = state_block(inv)
    if base.shape[0] != layout.n_state:
        raise DynamicsError("inventory does not match the matrix layout")
    blocks = np.tile(base, (mats.tau_max + 1, 1))
    for effect in pending.effects:
        offset = effect.completion_time - t
        if offset < 0:
            raise DynamicsError("pending effect in the past")
        if offset > mats.tau_max:
            raise DynamicsError("pending effect beyond the stack depth")
        delta = np.concatenate([
            effect.vehicles_delta.astype(np.float64),
            effect.components_delta.astype(np.float64),
            np.zeros(layout.n_dv),
            effect.damaged_components_delta.astype(np.float64),
            np.zeros(N_ATTRIBUTES)])
        blocks[offset:, :] += delta
    return blocks.reshape(-1)


def step_stacked(s: np.ndarray, action_vec: np.ndarray, input_vec: np.ndarray,
                 mats: SystemMatrices) -> np.ndarray:
    return mats.A @ s + mats.B @ action_vec + mats.C @ input_vec


def horizon_maps(mats: SystemMatrices, t_p: int):
    """Structural P, H, G for a t_p-step prediction.

    Exploits the shift-and-hold structure of A: a power of A relocates block
    rows and zeroes transient order rows, so no matrix powers are formed.
    """
    n_s, tau_max = mats.n_state, mats.tau_max
    n_stack = mats.n_stack
    order_rows = np.arange(mats.layout.sl_order.start, mats.layout.sl_order.stop)

    def shifted(mat: np.ndarray, m: int) -> np.ndarray:
        # mat is stacked (n_stack, cols); returns A^m @ mat.
        if m == 0:
            return mat
        out = np.empty_like(mat)
        for r in range(tau_max + 1):
            src = min(r + m, tau_max)
            out[r * n_s:(r + 1) * n_s, :] = mat[src * n_s:(src + 1) * n_s, :]
            out[r * n_s + order_rows, :] = 0.0
        return out

    P = np.zeros((t_p * n_stack, n_stack))
    eye = np.eye(n_stack)
    for i in range(1, t_p + 1):
        P[(i - 1) * n_stack: i * n_stack, :] = shifted(eye, i)
    H = np.zeros((t_p * n_stack, t_p * mats.action.n_action))
    G = np.zeros((t_p * n_stack, t_p * mats.C.shape[1]))
    n_a, n_in = mats.action.n_action, mats.C.shape[1]
    for i in range(1, t_p + 1):
        for j in range(i):
            H[(i - 1) * n_stack: i * n_stack, j * n_a:(j + 1) * n_a] = \
                shifted(mats.B, i - 1 - j)
            G[(i - 1) * n_stack: i * n_stack, j * n_in:(j + 1) * n_in] = \
                shifted(mats.C, i - 1 - j)
    return P, H, G


def predict_horizon(s: np.ndarray, actions: list[np.ndarray], inputs: list[np.ndarray],
                    mats: SystemMatrices) -> np.ndarray:
    """Predict stacked states for t+1..t+t_p from action and input sequences.

    Returns a (t_p, n_stack) array equal, exactly, to iterating the one-step
    dynamics t_p times.
    """
    t_p = len(actions)
    if len(inputs) != t_p:
        raise DynamicsError("action and input sequences must have equal length")
    P, H, G = horizon_maps(mats, t_p)
    o = np.concatenate([np.asarray(a, dtype=np.float64) for a in actions]) if t_p else np.zeros(0)
    a = np.concatenate([np.asarray(x, dtype=np.float64) for x in inputs]) if t_p else np.zeros(0)
    flat = P @ s + H @ o + G @ a
    return flat.reshape(t_p, mats.n_stack)


def component_census(inv: InventoryState, pending: PendingActions,
                     config: ScenarioConfig) -> np.ndarray:
    """Per-type component count across every pool the base can see."""
    total = config.vehicle_components.T @ inv.vehicles
    total = total + inv.components + inv.damaged_components
    for rec in inv.damaged_vehicles:
        total += rec.healthy_components + rec.damaged_components
    total += pending.in_flight_components(config.n_component_types)
    return total
