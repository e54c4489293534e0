"""Dispatch agent: choose the order attribute vector that minimizes predicted
failure, via coordinate pattern search over the two learned surrogates.

The win probability factors as p_w = p_f * p_s: feasibility (will the base
realize the order) times conditional success (will the realized convoy win).
Orders whose predicted failure exceeds the fleet's tolerance are replaced by
the zero order (giving up the event).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (
    FIREPOWER,
    N_ATTRIBUTES,
    PatternSearchConfig,
    ROLE_ATTACKER,
    ScenarioConfig,
)
from .domain import classify_strategy, strategy_to_order
from .neural import Network


class DispatchError(ValueError):
    pass


@dataclass
class DispatchDecision:
    order: np.ndarray
    p_feasible: float = 1.0
    p_success: float = 1.0
    p_win: float = 1.0
    gave_up: bool = False
    strategy: int = 1               # classified from the order, for the log
    forecast_adversary: np.ndarray | None = None
    forecast_class: int | None = None
    stochastic: bool = False
    fallback: bool = False          # surrogates unavailable, acted randomly

    def __post_init__(self):
        if self.gave_up and self.order.any():
            raise DispatchError("a given-up decision must carry the zero order")


def feasibility_features(order: np.ndarray, stocks: np.ndarray,
                         pending_deltas: np.ndarray,
                         demand_matrix: np.ndarray) -> np.ndarray:
    """Input layout of the feasibility surrogate.

    stocks: healthy vehicle and component counts, length n_v + n_c.
    pending_deltas: (horizon, n_v + n_c) stock changes still in flight.
    demand_matrix: (attributes, horizon) upcoming commitments.
    """
    return np.concatenate([order, stocks, pending_deltas.reshape(-1),
                           demand_matrix.reshape(-1)])


def success_features(order: np.ndarray, adversary: np.ndarray,
                     demand_matrix: np.ndarray) -> np.ndarray:
    return np.concatenate([order, adversary, demand_matrix.reshape(-1)])


def build_feasibility_corpus(samples: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
                             ) -> tuple[np.ndarray, np.ndarray]:
    """(order, dispatched_attributes, features) triples -> (X, y).

    An order counts as feasible when the dispatched attributes dominate it
    entrywise; the zero order is feasible vacuously.
    """
    if not samples:
        return np.zeros((0, 0)), np.zeros(0)
    X = np.stack([feat for _, _, feat in samples])
    y = np.array([1.0 if (dispatched >= order - 1e-9).all() else 0.0
                  for order, dispatched, _ in samples])
    return X, y


def build_success_corpus(samples: list[tuple[np.ndarray, float]]
                         ) -> tuple[np.ndarray, np.ndarray]:
    """(features, won) pairs -> (X, y)."""
    if not samples:
        return np.zeros((0, 0)), np.zeros(0)
    X = np.stack([feat for feat, _ in samples])
    y = np.array([won for _, won in samples])
    return X, y


def optimize_order(objective, start: np.ndarray,
                   params: PatternSearchConfig) -> tuple[np.ndarray, float]:
    """Coordinate pattern search on the non-negative orthant.

    Polls +/- one mesh step per coordinate, moves to the best strict
    improvement (ties to the earliest poll), doubles the mesh on success up
    to its initial size and halves it on failure. Deterministic.
    """
    x = np.maximum(start.astype(np.float64), 0.0)
    mesh0 = params.initial_mesh_fraction * np.maximum(start, 0.0)
    mesh = mesh0.copy()
    best = float(objective(x))
    evals = 1
    active = mesh0 > 0.0
    if not active.any():
        return x, best
    while evals < params.max_evaluations and float(mesh[active].max()) >= params.final_mesh:
        candidates = []
        for i in np.flatnonzero(active):
            for sign in (1.0, -1.0):
                pt = x.copy()
                pt[i] = max(0.0, pt[i] + sign * mesh[i])
                candidates.append(pt)
        values = []
        for pt in candidates:
            if evals >= params.max_evaluations:
                break
            values.append(float(objective(pt)))
            evals += 1
        improved = -1
        improved_value = best
        for idx, value in enumerate(values):
            if value < improved_value - 1e-12:
                improved_value = value
                improved = idx
        if improved >= 0:
            x = candidates[improved]
            best = improved_value
            mesh = np.minimum(mesh * 2.0, mesh0)
        else:
            mesh = mesh / 2.0
    return x, best


def surrogate_objective(f_feas: Network, f_succ: Network, stocks: np.ndarray,
                        pending_deltas: np.ndarray, adversary: np.ndarray,
                        demand_matrix: np.ndarray):
    """1 - p_f * p_s as a callable over candidate orders."""
    def objective(order: np.ndarray) -> float:
        xf = feasibility_features(order, stocks, pending_deltas, demand_matrix)
        xs = success_features(order, adversary, demand_matrix)
        p_f = float(f_feas.predict(xf[None, :])[0, 0])
        p_s = float(f_succ.predict(xs[None, :])[0, 0])
        if not (np.isfinite(p_f) and np.isfinite(p_s)):
            raise DispatchError("surrogate produced a non-finite probability")
        return 1.0 - p_f * p_s
    return objective


def decide_dispatch(order: np.ndarray, p_feasible: float, p_success: float,
                    epsilon_f: float, role: str, demand: np.ndarray,
                    config: ScenarioConfig) -> DispatchDecision:
    """Apply the give-up rule: dispatch only if 1 - p_w stays within tolerance."""
    p_win = p_feasible * p_success
    if not 0.0 <= p_win <= 1.0 + 1e-12:
        raise DispatchError(f"win probability {p_win} outside [0, 1]")
    if 1.0 - p_win > epsilon_f:
        return DispatchDecision(order=np.zeros(N_ATTRIBUTES), p_feasible=p_feasible,
                                p_success=p_success, p_win=p_win, gave_up=True,
                                strategy=1)
    decision = DispatchDecision(order=order.copy(), p_feasible=p_feasible,
                                p_success=p_success, p_win=p_win, gave_up=False)
    decision.strategy = classify_strategy(role, order, demand, config)
    return decision


def stochastic_stage_order(rng: np.random.Generator, role: str,
                           demand: np.ndarray,
                           config: ScenarioConfig) -> DispatchDecision:
    """Warm-up behavior: a uniformly random strategy band, converted to an order."""
    index = int(rng.integers(1, 11))
    band = config.strategy_bands(role)[index - 1]
    order = strategy_to_order(band, demand)
    gave_up = not order.any()
    return DispatchDecision(order=order, gave_up=gave_up,
                            strategy=index if not gave_up else 1,
                            stochastic=True)
