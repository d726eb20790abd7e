"""Portfolio value and risk-adjusted performance summaries.

sharpe_ratio follows the sum convention: the portfolio return over a
horizon is the sum of per-step wealth factors beta * (a . y), the risk
term is their population standard deviation, and the risk-free rate is
subtracted as a plain number.  sr_log is a conventional annualized
log-return Sharpe kept under a separate key for sanity checks; the two
are not comparable.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engine import BacktestResult, EngineError

DEFAULT_RISK_FREE = 0.02


class UndefinedSharpeError(ValueError):
    """Zero return variance over the horizon; the ratio is undefined."""


def portfolio_value(result: BacktestResult, p0: float = 1.0) -> float:
    """Final portfolio value, the exponential of the reward sum."""
    return float(p0 * np.exp(np.sum(result.rewards)))


def _horizon_factors(result: BacktestResult, horizon: int) -> np.ndarray:
    if horizon < 2:
        raise EngineError(f"horizon {horizon} too short (need >= 2 steps)")
    if horizon > result.n_steps:
        raise EngineError(
            f"horizon {horizon} exceeds backtest length {result.n_steps}"
        )
    return result.factors[:horizon]


def sharpe_ratio(result: BacktestResult, horizon: int, r_free: float = DEFAULT_RISK_FREE) -> float:
    """Sum-of-factors Sharpe over the first `horizon` steps."""
    factors = _horizon_factors(result, horizon)
    sigma = float(np.std(factors))
    if sigma == 0.0:
        raise UndefinedSharpeError(f"constant wealth factors over horizon {horizon}")
    return (float(factors.sum()) - r_free) / sigma


def sr_log(
    result: BacktestResult,
    horizon: int,
    r_free: float = DEFAULT_RISK_FREE,
    periods_per_year: int = 252,
) -> float:
    """Conventional annualized log-return Sharpe (not the sum form above)."""
    rewards = result.rewards[: _horizon_factors(result, horizon).size]
    sigma = float(np.std(rewards))
    if sigma == 0.0:
        raise UndefinedSharpeError(f"constant log returns over horizon {horizon}")
    excess = float(rewards.mean()) - r_free / periods_per_year
    return excess / sigma * float(np.sqrt(periods_per_year))


_HORIZON_RE = re.compile(r"^(\d+)([dwm])$")


def horizon_steps(label: str, steps_per_day: int = 1) -> int:
    """Steps covered by a horizon label such as "1w" or "2m".

    Intraday series (steps_per_day > 1) use calendar spans: a week is
    7 days, a month 30.  Daily series use trading spans: a 5-day week
    and a 21-day month.
    """
    if steps_per_day < 1:
        raise EngineError("steps_per_day must be >= 1")
    match = _HORIZON_RE.match(label.strip().lower())
    if not match:
        raise EngineError(f"unparseable horizon label {label!r}")
    count, unit = int(match.group(1)), match.group(2)
    if count < 1:
        raise EngineError(f"bad horizon count in {label!r}")
    if unit == "d":
        days = count
    elif unit == "w":
        days = 7 * count if steps_per_day > 1 else 5 * count
    else:
        days = 30 * count if steps_per_day > 1 else 21 * count
    return days * steps_per_day


@dataclass(frozen=True)
class MetricsReport:
    """Final value plus Sharpe per requested horizon for one strategy."""

    final_pv: float
    sharpe_by_horizon: dict[str, float]
    steps_per_day: int
    r_free: float

    def to_dict(self) -> dict:
        # undefined ratios become null so the JSON stays standard
        sharpes = {
            label: (value if np.isfinite(value) else None)
            for label, value in self.sharpe_by_horizon.items()
        }
        return {
            "final_pv": self.final_pv,
            "sharpe_by_horizon": sharpes,
            "steps_per_day": self.steps_per_day,
            "r_free": self.r_free,
        }


def horizon_table(
    results: Mapping[str, BacktestResult],
    horizons: Sequence[str],
    steps_per_day: int = 1,
    r_free: float = DEFAULT_RISK_FREE,
) -> dict[str, MetricsReport]:
    """Sharpe per strategy and horizon; every run must cover the longest.

    A strategy with constant wealth factors (hold-cash, say) gets NaN for
    that horizon rather than failing the whole table.
    """
    if not results:
        raise EngineError("no results to evaluate")
    if not horizons:
        raise EngineError("no horizons requested")
    table: dict[str, MetricsReport] = {}
    for name in results:
        result = results[name]
        sharpes = {}
        for label in horizons:
            steps = horizon_steps(label, steps_per_day)
            try:
                sharpes[label] = sharpe_ratio(result, steps, r_free)
            except UndefinedSharpeError:
                sharpes[label] = float("nan")
        table[name] = MetricsReport(
            final_pv=portfolio_value(result),
            sharpe_by_horizon=sharpes,
            steps_per_day=steps_per_day,
            r_free=r_free,
        )
    return table


def write_metrics_csv(
    table: Mapping[str, MetricsReport], horizons: Sequence[str], path: str | Path
) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "final_pv", *horizons])
        for name in sorted(table):
            report = table[name]
            row = [name, repr(float(report.final_pv))]
            row += [repr(float(report.sharpe_by_horizon[h])) for h in horizons]
            writer.writerow(row)


def write_metrics_json(table: Mapping[str, MetricsReport], path: str | Path) -> None:
    payload = {name: table[name].to_dict() for name in sorted(table)}
    Path(path).write_text(json.dumps(payload, sort_keys=True))
