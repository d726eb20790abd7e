"""Movement labels, simulated prediction channels and state assembly.

Labels live on {-1, 0, +1}: +1 predicts the next close is higher, -1 lower,
0 means no signal at that step.  A label at time t refers to the move from
t to t+1, so it is information a real predictor could emit at decision time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .market import MarketDataError, PriceSeries, _frozen


class SignalError(ValueError):
    """Bad signal configuration or malformed signal data."""


@dataclass(frozen=True)
class SignalConfig:
    """Controls the simulated prediction channel.

    accuracy is the probability a present label agrees with the realized
    movement; density is the fraction of usable steps that carry a label.
    """

    accuracy: float = 1.0
    density: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise SignalError(f"accuracy {self.accuracy} outside [0, 1]")
        if not 0.0 <= self.density <= 1.0:
            raise SignalError(f"density {self.density} outside [0, 1]")


@dataclass(frozen=True)
class SignalSeries:
    """Per-asset signal matrix, one row per risky asset, one column per step."""

    values: np.ndarray
    ties: np.ndarray | None = None
    discrete: bool = True

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise SignalError("signal values must be a 2-D matrix")
        if not np.all(np.isfinite(values)):
            raise SignalError("signal values must be finite")
        if self.discrete and not np.all(np.isin(values, (-1.0, 0.0, 1.0))):
            raise SignalError("discrete signal values must lie in {-1, 0, +1}")
        object.__setattr__(self, "values", _frozen(values))
        if self.ties is not None:
            ties = np.asarray(self.ties, dtype=bool)
            if ties.shape != values.shape:
                raise SignalError("tie mask shape does not match values")
            ties.setflags(write=False)
            object.__setattr__(self, "ties", ties)

    @property
    def n_assets(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


def true_movements(prices: PriceSeries) -> SignalSeries:
    """Realized next-step movement labels for every risky asset.

    Flat steps count as up so labels stay binary; ties are flagged in the
    mask.  The final column has no next step and is left absent (0).
    """
    if prices.n_steps < 2:
        raise MarketDataError("need at least two steps for movements")
    closes = prices.close[1:]
    diff = closes[:, 1:] - closes[:, :-1]
    labels = np.where(diff >= 0.0, 1.0, -1.0)
    n = prices.n_assets
    values = np.concatenate([labels, np.zeros((n, 1))], axis=1)
    ties = np.concatenate([diff == 0.0, np.zeros((n, 1), dtype=bool)], axis=1)
    return SignalSeries(values=values, ties=ties)


def oracle_labels(truth: SignalSeries, cfg: SignalConfig) -> SignalSeries:
    """Corrupt true movements into a channel of controlled quality.

    Density is derandomized: each asset keeps exactly round(density * usable)
    labels, where usable excludes the undefined final column.  Each kept
    label agrees with truth with probability accuracy, otherwise it flips.
    """
    rng = np.random.default_rng(cfg.seed)
    usable = truth.n_steps - 1
    if usable < 1:
        raise SignalError("truth series too short")
    keep = int(round(cfg.density * usable))
    out = np.zeros_like(truth.values)
    for i in range(truth.n_assets):
        kept = rng.permutation(usable)[:keep]
        flip = rng.random(usable) < (1.0 - cfg.accuracy)
        column = truth.values[i, :usable].copy()
        column[flip] = -column[flip]
        out[i, kept] = column[kept]
    return SignalSeries(values=out)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class MovementPredictor:
    """Per-asset logistic model over lagged log relative prices."""

    weights: np.ndarray
    bias: np.ndarray
    lags: int
    train_accuracy: np.ndarray = field(default=None)
    degenerate: np.ndarray = field(default=None)

    @property
    def mean_train_accuracy(self) -> float:
        return float(np.mean(self.train_accuracy))


def fit_internal_predictor(
    train: PriceSeries,
    lags: int = 5,
    epochs: int = 200,
    lr: float = 0.5,
    seed: int = 0,
) -> MovementPredictor:
    """Fit one logistic movement classifier per risky asset.

    Features at step t are the last `lags` log relative prices, the target
    is the realized movement at t.  Full-batch gradient descent on the
    cross-entropy; an asset whose training targets are single-class gets a
    constant predictor and a degenerate flag instead.
    """
    if lags < 1:
        raise SignalError("lags must be >= 1")
    if train.n_steps < lags + 2:
        raise MarketDataError(f"need at least {lags + 2} steps to fit {lags} lags")
    rng = np.random.default_rng(seed)
    closes = train.close[1:]
    log_rel = np.diff(np.log(closes), axis=1)
    n, t_rel = log_rel.shape
    n_samples = t_rel - lags
    weights = np.zeros((n, lags))
    bias = np.zeros(n)
    accuracy = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    for i in range(n):
        x = np.stack([log_rel[i, j : j + lags] for j in range(n_samples)])
        up = (log_rel[i, lags:] >= 0.0).astype(float)
        if np.all(up == up[0]):
            degenerate[i] = True
            bias[i] = 1.0 if up[0] else -1.0
            accuracy[i] = 1.0
            continue
        w = rng.normal(0.0, 1e-3, size=lags)
        b = 0.0
        for _ in range(epochs):
            p = _sigmoid(x @ w + b)
            err = p - up
            w -= lr * (x.T @ err) / n_samples
            b -= lr * float(err.mean())
        weights[i] = w
        bias[i] = b
        accuracy[i] = float(np.mean(((x @ w + b) >= 0.0) == (up > 0.5)))
    return MovementPredictor(
        weights=_frozen(weights),
        bias=_frozen(bias),
        lags=lags,
        train_accuracy=_frozen(accuracy),
        degenerate=degenerate,
    )


def predict_internal(predictor: MovementPredictor, window: np.ndarray) -> np.ndarray:
    """Predict next movements from a price window of raw or normalized closes.

    The window needs lags + 1 columns; log ratios are normalization
    invariant.  Returns one label in {-1, +1} per asset.
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] != predictor.weights.shape[0]:
        raise SignalError("window shape does not match predictor")
    if window.shape[1] < predictor.lags + 1:
        raise SignalError(
            f"window too short: {window.shape[1]} columns, need {predictor.lags + 1}"
        )
    if np.any(window <= 0.0):
        raise SignalError("window prices must be strictly positive")
    log_rel = np.diff(np.log(window), axis=1)[:, -predictor.lags :]
    logits = np.einsum("ij,ij->i", predictor.weights, log_rel) + predictor.bias
    return np.where(logits >= 0.0, 1.0, -1.0)


def predictor_labels(predictor: MovementPredictor, prices: PriceSeries) -> SignalSeries:
    """Run the predictor over a whole series, absent where history is short."""
    values = np.zeros((prices.n_assets, prices.n_steps))
    closes = prices.close[1:]
    for t in range(predictor.lags, prices.n_steps - 1):
        values[:, t] = predict_internal(predictor, closes[:, t - predictor.lags : t + 1])
    return SignalSeries(values=values)


@dataclass(frozen=True)
class AugmentedState:
    """Observation at one decision step: normalized price window plus signal."""

    price_window: np.ndarray
    signal: np.ndarray
    t: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "price_window", _frozen(self.price_window))
        object.__setattr__(self, "signal", _frozen(self.signal))

    @property
    def dim(self) -> int:
        return self.price_window.size + self.signal.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.price_window.ravel(), self.signal])


def augment(
    window: np.ndarray,
    signal: np.ndarray | None = None,
    t: int = 0,
    signal_dim: int | None = None,
) -> AugmentedState:
    """Build an observation from a raw close window and an optional signal.

    The window is normalized per asset by its last column, so the final
    column is all ones.  An absent signal becomes a zero vector.
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[1] < 1:
        raise SignalError("price window must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(window)) or np.any(window <= 0.0):
        raise SignalError("price window must be finite and strictly positive")
    if signal is None:
        if signal_dim is None:
            signal_dim = window.shape[0]
        signal = np.zeros(signal_dim)
    else:
        signal = np.asarray(signal, dtype=float)
        if signal.ndim != 1:
            raise SignalError("signal must be a vector")
        if signal_dim is not None and signal.size != signal_dim:
            raise SignalError(f"signal has dim {signal.size}, expected {signal_dim}")
    normalized = window / window[:, -1:]
    return AugmentedState(price_window=normalized, signal=signal, t=t)


def decision_indices(n_steps: int, window: int) -> range:
    """Steps with a full look-back window and an observable next move."""
    if window < 1:
        raise SignalError("window must be >= 1")
    return range(window - 1, n_steps - 1)


def signal_at(series: SignalSeries, t: int, lookback: int = 1) -> np.ndarray:
    """Signal column at t, optionally averaged over the last `lookback` steps."""
    if lookback < 1:
        raise SignalError("lookback must be >= 1")
    start = max(0, t - lookback + 1)
    return np.asarray(series.values[:, start : t + 1].mean(axis=1))


def build_states(
    prices: PriceSeries,
    signals: SignalSeries | None = None,
    window: int = 30,
    signal_dim: int | None = None,
    lookback: int = 1,
) -> list[AugmentedState]:
    """Assemble the observation sequence for every decision step."""
    if prices.n_steps < window + 2:
        raise MarketDataError(
            f"series of {prices.n_steps} steps too short for window {window}"
        )
    if signals is not None:
        if signals.n_assets != prices.n_assets:
            raise SignalError("signal assets do not match price series")
        if signals.n_steps != prices.n_steps:
            raise SignalError("signal steps do not match price series")
    closes = prices.close[1:]
    states = []
    for t in decision_indices(prices.n_steps, window):
        raw = closes[:, t - window + 1 : t + 1]
        sig = None if signals is None else signal_at(signals, t, lookback)
        states.append(augment(raw, sig, t=t, signal_dim=signal_dim))
    return states


def save_signal_csv(
    series: SignalSeries,
    assets: tuple[str, ...],
    timestamps: tuple,
    path: str | Path,
) -> None:
    """Audit dump, one (asset, timestamp, label) row per cell."""
    if len(assets) != series.n_assets or len(timestamps) != series.n_steps:
        raise SignalError("assets/timestamps do not match signal shape")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset", "timestamp", "label"])
        for i, asset in enumerate(assets):
            for j, ts in enumerate(timestamps):
                value = series.values[i, j]
                text = str(int(value)) if series.discrete else repr(float(value))
                writer.writerow([asset, str(ts), text])
