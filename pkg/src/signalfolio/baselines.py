"""Classical rebalancing strategies run through the same backtest engine.

All strategies decide over the full cash + assets simplex and see only the
price history embedded in each observation window, so comparisons against
the learned policy are like for like (same cost model, same information).
"""

from __future__ import annotations

import numpy as np

from .engine import EngineError, as_simplex
from .signals import AugmentedState


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise EngineError("can only project a vector")
    if not np.all(np.isfinite(v)):
        raise EngineError("cannot project non-finite values")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u > css / idx)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def crp_action(target: np.ndarray) -> np.ndarray:
    """Constantly rebalanced portfolio: always the fixed target mix."""
    return as_simplex(target, "target").copy()


def olmar_action(
    b: np.ndarray,
    y_history: np.ndarray,
    epsilon: float = 10.0,
    window: int = 5,
) -> np.ndarray:
    """Moving-average reversion step.

    Predicts the next relative price as the mean of cumulative inverse
    relatives over the window, then takes a passive-aggressive step toward
    satisfying b . x >= epsilon and projects back onto the simplex.  With
    too little history, a satisfied constraint or a flat prediction the
    weights pass through unchanged.
    """
    b = as_simplex(b, "weights")
    hist = np.asarray(y_history, dtype=float)
    if hist.ndim != 2 or hist.shape[1] != b.size:
        raise EngineError("y_history must be (steps, assets) matching weights")
    if window < 1:
        raise EngineError("window must be >= 1")
    if hist.shape[0] < window:
        return b.copy()
    recent = hist[-1 : -window - 1 : -1]
    predicted = np.cumprod(1.0 / recent, axis=0).mean(axis=0)
    if float(b @ predicted) >= epsilon:
        return b.copy()
    centered = predicted - predicted.mean()
    norm_sq = float(centered @ centered)
    if norm_sq <= 1e-300:
        return b.copy()
    step = (epsilon - float(b @ predicted)) / norm_sq
    return simplex_project(b + step * centered)


def wmamr_action(
    b: np.ndarray,
    y_history: np.ndarray,
    epsilon: float = 1.0,
    window: int = 5,
) -> np.ndarray:
    """Passive-aggressive mean reversion on the windowed average move.

    When the recent average relative return exceeds epsilon the weights
    step against it (recent winners get trimmed) and reproject; otherwise
    they pass through unchanged.
    """
    b = as_simplex(b, "weights")
    hist = np.asarray(y_history, dtype=float)
    if hist.ndim != 2 or hist.shape[1] != b.size:
        raise EngineError("y_history must be (steps, assets) matching weights")
    if window < 1:
        raise EngineError("window must be >= 1")
    if hist.shape[0] < window:
        return b.copy()
    avg = hist[-window:].mean(axis=0)
    loss = float(b @ avg) - epsilon
    if loss <= 0.0:
        return b.copy()
    centered = avg - avg.mean()
    norm_sq = float(centered @ centered)
    if norm_sq <= 1e-300:
        return b.copy()
    return simplex_project(b - (loss / norm_sq) * centered)


def _history_from_state(state: AugmentedState) -> np.ndarray:
    """Recover (steps, cash + assets) relative prices from the window."""
    w = state.price_window
    rel = (w[:, 1:] / w[:, :-1]).T
    return np.hstack([np.ones((rel.shape[0], 1)), rel])


class CRPPolicy:
    """Fixed-mix policy; the uniform target is the equal-weight baseline."""

    def __init__(self, target) -> None:
        self.target = as_simplex(target, "target")

    def __call__(self, state: AugmentedState) -> np.ndarray:
        return self.target.copy()


def ew_policy(n_components: int) -> CRPPolicy:
    return CRPPolicy(np.full(n_components, 1.0 / n_components))


def hold_cash_policy(n_components: int) -> CRPPolicy:
    target = np.zeros(n_components)
    target[0] = 1.0
    return CRPPolicy(target)


class _ReversionPolicy:
    decide = None

    def __init__(self, epsilon: float, window: int) -> None:
        self.epsilon = epsilon
        self.window = window
        self._b: np.ndarray | None = None

    def reset(self) -> None:
        self._b = None

    def __call__(self, state: AugmentedState) -> np.ndarray:
        m = state.price_window.shape[0] + 1
        if self._b is None:
            self._b = np.full(m, 1.0 / m)
        hist = _history_from_state(state)
        self._b = type(self).decide(self._b, hist, self.epsilon, self.window)
        return self._b.copy()


class OLMARPolicy(_ReversionPolicy):
    decide = staticmethod(olmar_action)

    def __init__(self, epsilon: float = 10.0, window: int = 5) -> None:
        super().__init__(epsilon, window)


class WMAMRPolicy(_ReversionPolicy):
    decide = staticmethod(wmamr_action)

    def __init__(self, epsilon: float = 1.0, window: int = 5) -> None:
        super().__init__(epsilon, window)
