"""Price series loading, validation, synthesis and slicing.

Every series carries a synthetic cash row at index 0 with constant price 1,
so a market of n risky assets has n+1 rows.  Timestamps are integers or
ISO-8601 datetimes, strictly increasing, and shared by all assets; ragged
input is rejected unless forward-filling is requested explicitly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

CASH = "CASH"


class MarketDataError(ValueError):
    """Malformed or inconsistent price data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PriceSeries:
    """Closing prices for cash + risky assets, one column per time step."""

    close: np.ndarray
    timestamps: tuple
    assets: tuple[str, ...]
    high: np.ndarray | None = None
    low: np.ndarray | None = None

    def __post_init__(self) -> None:
        close = np.asarray(self.close, dtype=float)
        if close.ndim != 2:
            raise MarketDataError("close must be a 2-D matrix")
        n_rows, n_cols = close.shape
        if n_rows != len(self.assets) + 1:
            raise MarketDataError(
                f"close has {n_rows} rows but expected {len(self.assets) + 1} "
                "(cash + risky assets)"
            )
        if n_cols == 0:
            raise MarketDataError("series has no time steps")
        if n_cols != len(self.timestamps):
            raise MarketDataError("timestamps do not match close columns")
        if not np.all(np.isfinite(close)) or np.any(close <= 0.0):
            raise MarketDataError("prices must be finite and strictly positive")
        if np.any(close[0] != close[0, 0]):
            raise MarketDataError("cash row must be constant")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            try:
                ordered = a < b
            except TypeError as exc:
                raise MarketDataError(f"incomparable timestamps {a!r} and {b!r}") from exc
            if not ordered:
                raise MarketDataError(f"timestamps not strictly increasing at {b!r}")
        object.__setattr__(self, "close", _frozen(close))
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "assets", tuple(self.assets))
        for name in ("high", "low"):
            extra = getattr(self, name)
            if extra is None:
                continue
            extra = np.asarray(extra, dtype=float)
            if extra.shape != close.shape:
                raise MarketDataError(f"{name} shape does not match close")
            if not np.all(np.isfinite(extra)) or np.any(extra <= 0.0):
                raise MarketDataError(f"{name} must be finite and strictly positive")
            object.__setattr__(self, name, _frozen(extra))
        if self.high is not None and np.any(self.close > self.high):
            raise MarketDataError("close exceeds high")
        if self.low is not None and np.any(self.close < self.low):
            raise MarketDataError("close below low")

    @property
    def n_assets(self) -> int:
        """Number of risky assets (cash excluded)."""
        return len(self.assets)

    @property
    def n_steps(self) -> int:
        return self.close.shape[1]

    def slice(self, start: int, stop: int) -> "PriceSeries":
        if not 0 <= start < stop <= self.n_steps:
            raise MarketDataError(f"bad slice [{start}, {stop}) of {self.n_steps} steps")
        return PriceSeries(
            close=self.close[:, start:stop],
            timestamps=self.timestamps[start:stop],
            assets=self.assets,
            high=None if self.high is None else self.high[:, start:stop],
            low=None if self.low is None else self.low[:, start:stop],
        )


@dataclass(frozen=True)
class RelativePrices:
    """Per-step price ratios close[t+1] / close[t]; the cash row is exactly 1."""

    y: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2 or y.shape[1] < 1:
            raise MarketDataError("relative prices must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(y)) or np.any(y <= 0.0):
            raise MarketDataError("relative prices must be finite and strictly positive")
        if np.any(y[0] != 1.0):
            raise MarketDataError("cash relative price must be exactly 1")
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n_steps(self) -> int:
        return self.y.shape[1]


def relative_prices(prices: PriceSeries) -> RelativePrices:
    """Consecutive close ratios.  Requires at least two steps."""
    if prices.n_steps < 2:
        raise MarketDataError("need at least two steps for relative prices")
    y = prices.close[:, 1:] / prices.close[:, :-1]
    y[0, :] = 1.0
    return RelativePrices(y=y)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/test boundary, as a fraction or an explicit index."""

    fraction: float | None = None
    boundary: int | None = None

    def __post_init__(self) -> None:
        if (self.fraction is None) == (self.boundary is None):
            raise MarketDataError("give exactly one of fraction or boundary")
        if self.fraction is not None and not 0.0 < self.fraction < 1.0:
            raise MarketDataError(f"split fraction {self.fraction} outside (0, 1)")
        if self.boundary is not None and self.boundary < 1:
            raise MarketDataError(f"split boundary {self.boundary} must be >= 1")


def chronological_split(
    prices: PriceSeries, spec: SplitSpec, min_steps: int = 2
) -> tuple[PriceSeries, PriceSeries]:
    """Split into (train, test) at the boundary; order is preserved.

    Each segment must keep at least min_steps steps; callers that feed a
    windowed policy should pass window + 2.
    """
    if spec.boundary is not None:
        k = spec.boundary
    else:
        k = int(round(spec.fraction * prices.n_steps))
    if k < min_steps or prices.n_steps - k < min_steps:
        raise MarketDataError(
            f"segment too short: boundary {k} of {prices.n_steps} steps "
            f"(need >= {min_steps} on each side)"
        )
    return prices.slice(0, k), prices.slice(k, prices.n_steps)


@dataclass(frozen=True)
class SyntheticMarketSpec:
    """Seeded log-space Gaussian walk with optional drift-sign regime switching."""

    n_assets: int
    n_steps: int
    drift: float | tuple[float, ...] = 0.0
    vol: float | tuple[float, ...] = 0.01
    regime_switch_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_assets < 1:
            raise MarketDataError("need at least one risky asset")
        if self.n_steps < 2:
            raise MarketDataError("need at least two steps")
        if not 0.0 <= self.regime_switch_prob <= 1.0:
            raise MarketDataError("regime switch probability outside [0, 1]")
        if np.any(self._vols() < 0.0):
            raise MarketDataError("volatility must be non-negative")

    def _per_asset(self, value) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return np.full(self.n_assets, float(arr))
        if arr.shape != (self.n_assets,):
            raise MarketDataError(f"per-asset value has shape {arr.shape}, want ({self.n_assets},)")
        return arr

    def _drifts(self) -> np.ndarray:
        return self._per_asset(self.drift)

    def _vols(self) -> np.ndarray:
        return self._per_asset(self.vol)


def generate_synthetic(spec: SyntheticMarketSpec) -> PriceSeries:
    """Generate a seeded synthetic market starting at price 1.

    Log prices follow per-asset drift plus Gaussian noise.  When regime
    switching is enabled, a global sign flips with the given probability at
    each step and multiplies every drift, so favourable assets trade places.
    """
    rng = np.random.default_rng(spec.seed)
    n, t_total = spec.n_assets, spec.n_steps
    drift = spec._drifts()
    vol = spec._vols()
    flips = rng.random(t_total - 1) < spec.regime_switch_prob
    signs = np.where(flips, -1.0, 1.0).cumprod()
    noise = rng.standard_normal((n, t_total - 1))
    increments = drift[:, None] * signs[None, :] + vol[:, None] * noise
    log_close = np.concatenate([np.zeros((n, 1)), np.cumsum(increments, axis=1)], axis=1)
    close = np.vstack([np.ones((1, t_total)), np.exp(log_close)])
    return PriceSeries(
        close=close,
        timestamps=tuple(range(t_total)),
        assets=tuple(f"A{i + 1}" for i in range(n)),
    )


@dataclass(frozen=True)
class CsvSchema:
    """Column names for long-format price CSVs, plus an optional asset order."""

    timestamp: str = "timestamp"
    asset: str = "asset"
    close: str = "close"
    high: str = "high"
    low: str = "low"
    assets: tuple[str, ...] | None = None


def _parse_timestamp(raw: str):
    text = raw.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise MarketDataError(f"unparseable timestamp {raw!r}") from None


def _parse_price(raw: str, where: str) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MarketDataError(f"unparseable price {raw!r} at {where}") from None
    if not np.isfinite(value) or value <= 0.0:
        raise MarketDataError(f"non-positive price {raw!r} at {where}")
    return value


def load_csv(
    path: str | Path,
    schema: CsvSchema | None = None,
    forward_fill: bool = False,
) -> PriceSeries:
    """Load a long-format CSV of (timestamp, asset, close[, high, low]) rows.

    All assets must cover the same timestamps.  With forward_fill=True a
    missing (asset, timestamp) cell reuses the asset's most recent earlier
    row; leading gaps are still an error.  Cash is synthesized at row 0.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for required in (schema.timestamp, schema.asset, schema.close):
            if required not in header:
                raise MarketDataError(f"{path}: missing column {required!r}")
        has_high = schema.high in header
        has_low = schema.low in header
        cells: dict[str, dict] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            asset = (row[schema.asset] or "").strip()
            if not asset:
                raise MarketDataError(f"empty asset id at {where}")
            ts = _parse_timestamp(row[schema.timestamp] or "")
            if asset not in cells:
                cells[asset] = {}
                order.append(asset)
            if ts in cells[asset]:
                raise MarketDataError(f"duplicate row for asset {asset!r} at {where}")
            close = _parse_price(row[schema.close], where)
            high = _parse_price(row[schema.high], where) if has_high else None
            low = _parse_price(row[schema.low], where) if has_low else None
            cells[asset][ts] = (close, high, low)
    if not cells:
        raise MarketDataError(f"{path}: no data rows")
    if schema.assets is not None:
        missing = [a for a in schema.assets if a not in cells]
        if missing:
            raise MarketDataError(f"{path}: assets {missing} not present")
        extra = [a for a in order if a not in schema.assets]
        if extra:
            raise MarketDataError(f"{path}: assets {extra} not listed in schema")
        order = list(schema.assets)
    timestamps = set()
    for per_asset in cells.values():
        timestamps.update(per_asset.keys())
    try:
        grid = sorted(timestamps)
    except TypeError as exc:
        raise MarketDataError(f"{path}: mixed timestamp types") from exc
    n, t_total = len(order), len(grid)
    close = np.empty((n, t_total))
    high = np.empty((n, t_total)) if has_high else None
    low = np.empty((n, t_total)) if has_low else None
    for i, asset in enumerate(order):
        per_asset = cells[asset]
        last = None
        for j, ts in enumerate(grid):
            if ts in per_asset:
                last = per_asset[ts]
            elif not forward_fill or last is None:
                raise MarketDataError(
                    f"{path}: ragged series, asset {asset!r} missing timestamp {ts!r}"
                )
            close[i, j] = last[0]
            if high is not None:
                high[i, j] = last[1]
            if low is not None:
                low[i, j] = last[2]
    cash = np.ones((1, t_total))
    return PriceSeries(
        close=np.vstack([cash, close]),
        timestamps=tuple(grid),
        assets=tuple(order),
        high=None if high is None else np.vstack([cash, high]),
        low=None if low is None else np.vstack([cash, low]),
    )


def write_csv(prices: PriceSeries, path: str | Path, schema: CsvSchema | None = None) -> None:
    """Write the risky rows back to long-format CSV (cash is implicit)."""
    schema = schema or CsvSchema()
    include_extra = prices.high is not None and prices.low is not None
    fields = [schema.timestamp, schema.asset, schema.close]
    if include_extra:
        fields += [schema.high, schema.low]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for j, ts in enumerate(prices.timestamps):
            stamp = ts.isoformat() if isinstance(ts, datetime) else str(ts)
            for i, asset in enumerate(prices.assets):
                row = [stamp, asset, repr(float(prices.close[i + 1, j]))]
                if include_extra:
                    row.append(repr(float(prices.high[i + 1, j])))
                    row.append(repr(float(prices.low[i + 1, j])))
                writer.writerow(row)
