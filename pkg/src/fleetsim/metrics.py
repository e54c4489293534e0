"""Monthly metrics: aggregation from run-log records and report emission.

The same aggregation path serves the live simulation and the ``report``
subcommand, so re-emitting reports from a persisted log reproduces the files
byte for byte.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ATTRIBUTE_NAMES, N_ATTRIBUTES, ROLE_ATTACKER, ROLE_DEFENDER, ScenarioConfig


@dataclass
class MonthMetrics:
    """One fleet's row for one month."""

    month: int
    fleet: str
    events: int = 0
    wins: int = 0
    losses: int = 0
    draws: int = 0
    redundant: float = 0.0
    insufficient: float = 0.0
    max_dispatched: list = field(default_factory=lambda: [0.0] * N_ATTRIBUTES)
    module_damage: int = 0
    attack_strategies: list = field(default_factory=lambda: [0] * 10)
    defense_strategies: list = field(default_factory=lambda: [0] * 10)
    mse_sums: list = field(default_factory=lambda: [0.0] * N_ATTRIBUTES)
    mse_count: int = 0
    station_hours: float = 0.0
    budget_hits: int = 0

    @property
    def decided(self) -> int:
        return self.wins + self.losses

    @property
    def win_rate(self) -> float | None:
        return self.wins / self.decided if self.decided else None

    @property
    def inference_mse(self) -> list | None:
        if not self.mse_count:
            return None
        return [s / self.mse_count for s in self.mse_sums]

    def as_dict(self) -> dict:
        return {
            "month": self.month,
            "fleet": self.fleet,
            "events": self.events,
            "wins": self.wins,
            "losses": self.losses,
            "draws": self.draws,
            "win_rate": self.win_rate,
            "redundant": self.redundant,
            "insufficient": self.insufficient,
            "max_dispatched": list(self.max_dispatched),
            "module_damage": self.module_damage,
            "attack_strategies": list(self.attack_strategies),
            "defense_strategies": list(self.defense_strategies),
            "inference_mse": self.inference_mse,
            "station_hours": self.station_hours,
            "budget_hits": self.budget_hits,
        }


def collect_metrics(records: list[dict], month: int,
                    config: ScenarioConfig) -> list[MonthMetrics]:
    """Aggregate one month's run-log records into per-fleet rows."""
    fleets = [f.name for f in config.fleets]
    rows = {name: MonthMetrics(month=month, fleet=name) for name in fleets}

    for rec in records:
        kind = rec.get("type")
        if kind == "event":
            winner = rec["winner"]
            for side in rec["sides"]:
                row = rows[side["fleet"]]
                row.events += 1
                if winner == "draw":
                    row.draws += 1
                elif winner == side["fleet"]:
                    row.wins += 1
                else:
                    row.losses += 1
                dispatched = np.array(side["dispatched"])
                ordered = np.array(side["order"])
                diff = dispatched - ordered
                row.redundant += float(np.maximum(diff, 0.0).sum())
                row.insufficient += float(np.maximum(-diff, 0.0).sum())
                row.max_dispatched = [max(row.max_dispatched[h], float(dispatched[h]))
                                      for h in range(N_ATTRIBUTES)]
                row.module_damage += int(side["damage"])
                hist = (row.attack_strategies if side["role"] == ROLE_ATTACKER
                        else row.defense_strategies)
                hist[side["strategy"] - 1] += 1
                if side.get("forecast_error_sq") is not None:
                    err = side["forecast_error_sq"]
                    for h in range(N_ATTRIBUTES):
                        row.mse_sums[h] += float(err[h])
                    row.mse_count += 1
        elif kind == "tick":
            row = rows[rec["fleet"]]
            row.station_hours += float(rec.get("station_hours", 0.0))
            if rec.get("plan_status") == "budget_limited":
                row.budget_hits += 1
    return [rows[name] for name in fleets]


def rows_from_log(records: list[dict], config: ScenarioConfig) -> list[MonthMetrics]:
    """Recompute every monthly row from a full run log."""
    hours_per_month = config.stages.hours_per_month
    months = config.stages.total_months
    by_month: dict[int, list[dict]] = {m: [] for m in range(months)}
    for rec in records:
        if rec.get("type") in ("event", "tick"):
            t = rec.get("t", 0)
            m = int(t) // hours_per_month
            if m in by_month:
                by_month[m].append(rec)
    rows: list[MonthMetrics] = []
    for m in range(months):
        rows.extend(collect_metrics(by_month[m], m, config))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_reports(rows: list[MonthMetrics], out_dir: str | Path,
                 config: ScenarioConfig, summary_extra: dict | None = None) -> list[Path]:
    """Write one CSV per metric family plus a run summary JSON.

    Rows must cover contiguous months for both fleets; column order is fixed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise ValueError("no metrics rows to emit")
    fleets = [f.name for f in config.fleets]
    months = sorted({r.month for r in rows})
    table = {(r.month, r.fleet): r for r in rows}
    written: list[Path] = []

    def open_csv(name: str, header: list[str]):
        path = out / name
        fh = open(path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(header)
        written.append(path)
        return fh, writer

    fh, w = open_csv("win_rate.csv",
                     ["month"] + [f"{f}_wins" for f in fleets] + ["draws"]
                     + [f"{f}_win_rate" for f in fleets])
    for m in months:
        r0, r1 = table[(m, fleets[0])], table[(m, fleets[1])]
        w.writerow([m, r0.wins, r1.wins, r0.draws,
                    _fmt(r0.win_rate), _fmt(r1.win_rate)])
    fh.close()

    fh, w = open_csv("mismatch.csv",
                     ["month"] + [f"{f}_{kind}" for f in fleets
                                  for kind in ("redundant", "insufficient")])
    for m in months:
        row = [m]
        for f in fleets:
            r = table[(m, f)]
            row += [_fmt(r.redundant), _fmt(r.insufficient)]
        w.writerow(row)
    fh.close()

    fh, w = open_csv("max_attributes.csv",
                     ["month"] + [f"{f}_{a}" for f in fleets for a in ATTRIBUTE_NAMES])
    for m in months:
        row = [m]
        for f in fleets:
            row += [_fmt(v) for v in table[(m, f)].max_dispatched]
        w.writerow(row)
    fh.close()

    fh, w = open_csv("module_damage.csv", ["month"] + [f"{f}_damage" for f in fleets])
    for m in months:
        w.writerow([m] + [table[(m, f)].module_damage for f in fleets])
    fh.close()

    fh, w = open_csv("strategy_usage.csv",
                     ["month", "fleet", "role"] + [f"s{i}" for i in range(1, 11)])
    for m in months:
        for f in fleets:
            r = table[(m, f)]
            for role, hist in ((ROLE_ATTACKER, r.attack_strategies),
                               (ROLE_DEFENDER, r.defense_strategies)):
                total = sum(hist)
                props = [(h / total if total else 0.0) for h in hist]
                w.writerow([m, f, role] + [_fmt(p) for p in props])
    fh.close()

    fh, w = open_csv("inference_mse.csv",
                     ["month"] + [f"{f}_{a}" for f in fleets for a in ATTRIBUTE_NAMES])
    for m in months:
        row = [m]
        for f in fleets:
            mse = table[(m, f)].inference_mse
            row += ["" if mse is None else _fmt(v) for v in (mse or [None] * 3)]
        w.writerow(row)
    fh.close()

    fh, w = open_csv("machine_requirements.csv",
                     ["month"] + [f"{f}_station_hours" for f in fleets])
    for m in months:
        w.writerow([m] + [_fmt(table[(m, f)].station_hours) for f in fleets])
    fh.close()

    summary = {
        "seed": config.seed,
        "fleets": [{"name": f.name, "kind": f.kind} for f in config.fleets],
        "months": len(months),
        "events": sum(table[(m, fleets[0])].events for m in months),
        "config": config.raw,
    }
    if summary_extra:
        summary.update(summary_extra)
    path = out / "run_summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written
