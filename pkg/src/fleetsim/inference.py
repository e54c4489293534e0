"""Inference agent: forecast the adversary's next dispatch strategy.

Each resolved engagement becomes an event record; windows of the most recent
records feed an LSTM classifier over the ten strategy bands, one model per
adversary role. The predicted band converts to an expected adversary
attribute vector through the band's coefficient caps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import N_ATTRIBUTES, ROLE_ATTACKER, ROLE_DEFENDER, ScenarioConfig, TrainConfig
from .domain import strategy_to_order
from .neural import Network, TrainResult, train

N_STRATEGIES = 10
# Feature channels per event step: demand, own dispatch, adversary dispatch,
# own-role flag.
N_CHANNELS = 3 * N_ATTRIBUTES + 1


class InferenceError(ValueError):
    pass


@dataclass
class EventRecord:
    """One resolved engagement from one fleet's point of view."""

    time: float
    demand: np.ndarray
    own_dispatched: np.ndarray
    adversary_dispatched: np.ndarray
    own_role: str                    # attacker | defender
    won: bool
    adversary_strategy: int          # classified band of the adversary, 1..10

    def features(self) -> np.ndarray:
        role_flag = 1.0 if self.own_role == ROLE_DEFENDER else 0.0
        return np.concatenate([self.demand, self.own_dispatched,
                               self.adversary_dispatched, [role_flag]])


def event_window(history: list[EventRecord], upto: int, window: int) -> np.ndarray:
    """Features of the ``window`` events before index ``upto``, zero-padded left."""
    out = np.zeros((window, N_CHANNELS))
    lo = max(0, upto - window)
    rows = [history[i].features() for i in range(lo, upto)]
    if rows:
        out[window - len(rows):] = np.stack(rows)
    return out


def build_dataset(history: list[EventRecord], window: int,
                  adversary_role: str) -> tuple[np.ndarray, np.ndarray]:
    """One sample per event in which the adversary held the given role.

    The sample's input is the window of events strictly before it; the label
    is the adversary's classified strategy at the event itself.
    """
    X, y = [], []
    for m, record in enumerate(history):
        if record.own_role == adversary_role:
            continue  # adversary held the other role in this event
        X.append(event_window(history, m, window))
        y.append(record.adversary_strategy - 1)
    if not X:
        return np.zeros((0, window, N_CHANNELS)), np.zeros(0, dtype=np.int64)
    return np.stack(X), np.array(y, dtype=np.int64)


def infer_strategy(model: Network | None, window: np.ndarray) -> tuple[int, np.ndarray]:
    """Most probable strategy band; ties break to the lowest index.

    An untrained model yields the uniform prior, hence band 1.
    """
    if model is None:
        probs = np.full(N_STRATEGIES, 1.0 / N_STRATEGIES)
        return 1, probs
    probs = model.predict(window[None, :, :])[0]
    best = int(np.argmax(probs))   # argmax returns the first maximal index
    return best + 1, probs


def forecast_convoy(strategy_index: int, demand: np.ndarray, adversary_role: str,
                    config: ScenarioConfig) -> np.ndarray:
    """Expected adversary attributes under a band: its caps times the demand."""
    if not 1 <= strategy_index <= N_STRATEGIES:
        raise InferenceError(f"strategy index {strategy_index} out of range")
    band = config.strategy_bands(adversary_role)[strategy_index - 1]
    return strategy_to_order(band, demand)


@dataclass
class InferenceAgent:
    """Per-fleet forecaster holding one model per adversary role."""

    config: ScenarioConfig
    models: dict = field(default_factory=lambda: {ROLE_ATTACKER: None,
                                                  ROLE_DEFENDER: None})
    fallbacks: int = 0

    def forecast(self, history: list[EventRecord], demand: np.ndarray,
                 adversary_role: str) -> tuple[int, np.ndarray, bool]:
        """(band, expected adversary attributes, used_fallback)."""
        model = self.models.get(adversary_role)
        window = event_window(history, len(history), self.config.inference_window)
        index, _ = infer_strategy(model, window)
        fallback = model is None
        if fallback:
            self.fallbacks += 1
        return index, forecast_convoy(index, demand, adversary_role, self.config), fallback

    def retrain(self, history: list[EventRecord], adversary_role: str,
                seed: int) -> TrainResult | None:
        """Fresh model on the full history; keep the old one if data is empty
        or the new model fails to validate."""
        X, y = build_dataset(history, self.config.inference_window, adversary_role)
        if X.shape[0] == 0:
            return None
        tr = self.config.training
        candidate = Network.lstm_classifier(
            n_in=N_CHANNELS, n_classes=N_STRATEGIES, hidden=tr.lstm_hidden,
            dense_hidden=tr.dense_hidden, seed=seed,
            standard_cell=tr.standard_lstm_cell)
        result = train(candidate, X, y, tr, seed=seed)
        losses = result.val_loss or result.train_loss
        if not losses or not np.isfinite(losses[-1]):
            return None
        self.models[adversary_role] = candidate
        return result
