"""Portfolio dynamics: weight drift, rebalancing cost, log rewards, backtests.

Weight vectors live on the probability simplex over cash + n risky assets,
with cash at index 0.  One step: prices move by y, held weights drift, the
policy picks a target allocation, and the rebalance shrinks wealth by a
factor beta solved from a fixed point of the commission structure.  The
step reward is ln(beta * (a . y)), so portfolio value is the exponential
of the reward sum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import MarketDataError, PriceSeries, _frozen, relative_prices
from .signals import SignalSeries, build_states

SIMPLEX_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Cost fixed point failed to converge."""


class EngineError(ValueError):
    """Invalid portfolio-engine input."""


def as_simplex(v, name: str = "weights") -> np.ndarray:
    """Validate and return a simplex vector (non-negative, sums to 1)."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise EngineError(f"{name} must be a vector over cash + assets")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise EngineError(f"{name} must be finite and non-negative")
    if abs(float(arr.sum()) - 1.0) > SIMPLEX_TOL:
        raise EngineError(f"{name} must sum to 1 (got {arr.sum()!r})")
    return arr


def all_cash(m: int) -> np.ndarray:
    w = np.zeros(m)
    w[0] = 1.0
    return w


def _check_rel(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (m,):
        raise EngineError(f"relative prices have shape {y.shape}, want ({m},)")
    if not np.all(np.isfinite(y)) or np.any(y <= 0.0):
        raise EngineError("relative prices must be finite and strictly positive")
    if abs(float(y[0]) - 1.0) > SIMPLEX_TOL:
        raise EngineError("cash relative price must be 1")
    return y


@dataclass(frozen=True)
class CostModel:
    """Commission rates and the fixed-point solver settings.

    mode "fixed_point" solves the exact wealth-shrink factor; "simple"
    charges a blended one-way rate on turnover and exists as a
    differentiable cross-check.
    """

    c_buy: float = 0.0025
    c_sell: float = 0.0025
    max_iters: int = 100
    tol: float = 1e-10
    mode: str = "fixed_point"

    def __post_init__(self) -> None:
        if not 0.0 <= self.c_buy < 1.0 or not 0.0 <= self.c_sell < 1.0:
            raise EngineError("commission rates must lie in [0, 1)")
        if self.max_iters < 1 or self.tol <= 0.0:
            raise EngineError("bad solver settings")
        if self.mode not in ("fixed_point", "simple"):
            raise EngineError(f"unknown cost mode {self.mode!r}")

    @property
    def blended_rate(self) -> float:
        return 0.5 * (self.c_buy + self.c_sell)


def drift_weights(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Weights after prices move: (y * a) / (y . a)."""
    a = as_simplex(a, "action")
    y = _check_rel(y, a.size)
    return (y * a) / float(y @ a)


def cost_fixed_point(w_drift: np.ndarray, a: np.ndarray, cm: CostModel) -> tuple[float, int]:
    """Solve the rebalance shrink factor mu and report iterations used.

    Iterates mu <- [1 - cb*w0 - (cs + cb - cs*cb) * sum_i max(wi - mu*ai, 0)]
    / (1 - cb*a0) from mu = 1 until successive values differ by less than
    the tolerance.  w_drift is the pre-trade allocation, a the target.
    """
    cb, cs = cm.c_buy, cm.c_sell
    if cb == 0.0 and cs == 0.0:
        return 1.0, 0
    k = cs + cb - cs * cb
    denom = 1.0 - cb * float(a[0])
    w_risky = w_drift[1:]
    a_risky = a[1:]
    mu = 1.0
    for i in range(cm.max_iters):
        sold = float(np.maximum(w_risky - mu * a_risky, 0.0).sum())
        nxt = (1.0 - cb * float(w_drift[0]) - k * sold) / denom
        if abs(nxt - mu) < cm.tol:
            return nxt, i + 1
        mu = nxt
    raise ConvergenceError(f"cost fixed point did not converge in {cm.max_iters} iterations")


def _simple_factor(w_drift: np.ndarray, a: np.ndarray, cm: CostModel) -> float:
    turnover = float(np.abs(a[1:] - w_drift[1:]).sum())
    beta = 1.0 - cm.blended_rate * turnover
    if beta <= 0.0:
        raise EngineError("cost rate too large for turnover in simple mode")
    return beta


def cost_factor(w_prev: np.ndarray, a: np.ndarray, y_prev: np.ndarray, cm: CostModel) -> float:
    """Wealth fraction surviving the rebalance from drifted w_prev to a."""
    a = as_simplex(a, "action")
    w_drift = drift_weights(w_prev, y_prev)
    if cm.mode == "simple":
        return _simple_factor(w_drift, a, cm)
    beta, _ = cost_fixed_point(w_drift, a, cm)
    return beta


def step_reward(
    w_prev: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    y_prev: np.ndarray,
    cm: CostModel,
) -> float:
    """Transaction-cost-adjusted log return of one step."""
    a = as_simplex(a, "action")
    y = _check_rel(y, a.size)
    beta = cost_factor(w_prev, a, y_prev, cm)
    return float(np.log(beta * float(a @ y)))


def accumulate(rewards, p0: float = 1.0) -> np.ndarray:
    """Portfolio value trajectory p_t = p0 * exp(cumulative reward)."""
    rewards = np.asarray(rewards, dtype=float)
    if p0 <= 0.0:
        raise EngineError("initial portfolio value must be positive")
    if rewards.size == 0:
        return np.array([p0])
    return np.concatenate([[p0], p0 * np.exp(np.cumsum(rewards))])


@dataclass(frozen=True)
class ChainResult:
    """Vectorized per-step quantities of one reward chain."""

    drifted: np.ndarray
    betas: np.ndarray
    factors: np.ndarray
    rewards: np.ndarray


def _fixed_point_batch(w_drift: np.ndarray, a: np.ndarray, cm: CostModel) -> np.ndarray:
    t_total = a.shape[0]
    cb, cs = cm.c_buy, cm.c_sell
    if cb == 0.0 and cs == 0.0:
        return np.ones(t_total)
    k = cs + cb - cs * cb
    denom = 1.0 - cb * a[:, 0]
    mu = np.ones(t_total)
    for _ in range(cm.max_iters):
        sold = np.maximum(w_drift[:, 1:] - mu[:, None] * a[:, 1:], 0.0).sum(axis=1)
        nxt = (1.0 - cb * w_drift[:, 0] - k * sold) / denom
        done = np.all(np.abs(nxt - mu) < cm.tol)
        mu = nxt
        if done:
            return mu
    raise ConvergenceError(f"cost fixed point did not converge in {cm.max_iters} iterations")


def reward_chain(
    actions: np.ndarray,
    rel: np.ndarray,
    entry_weights: np.ndarray,
    entry_rel: np.ndarray,
    cm: CostModel,
) -> ChainResult:
    """Thread the weight/cost recursion over a whole action sequence.

    actions and rel are (T, m) row-per-step matrices; entry_weights and
    entry_rel describe the holdings and price move immediately before the
    first step.  Returns drifted pre-trade weights, shrink factors, wealth
    factors beta * (a . y) and log rewards.
    """
    actions = np.asarray(actions, dtype=float)
    rel = np.asarray(rel, dtype=float)
    if actions.ndim != 2 or actions.shape != rel.shape:
        raise EngineError("actions and relative prices must be matching (T, m) matrices")
    prev_a = np.vstack([entry_weights, actions[:-1]])
    prev_y = np.vstack([entry_rel, rel[:-1]])
    num = prev_y * prev_a
    drifted = num / num.sum(axis=1, keepdims=True)
    if cm.mode == "simple":
        turnover = np.abs(actions[:, 1:] - drifted[:, 1:]).sum(axis=1)
        betas = 1.0 - cm.blended_rate * turnover
        if np.any(betas <= 0.0):
            raise EngineError("cost rate too large for turnover in simple mode")
    else:
        betas = _fixed_point_batch(drifted, actions, cm)
    gross = (actions * rel).sum(axis=1)
    factors = betas * gross
    return ChainResult(
        drifted=drifted,
        betas=betas,
        factors=factors,
        rewards=np.log(factors),
    )


@dataclass(frozen=True)
class BacktestResult:
    """Everything recorded over one backtest run."""

    start_index: int
    actions: np.ndarray
    weights: np.ndarray
    betas: np.ndarray
    factors: np.ndarray
    rewards: np.ndarray
    pv: np.ndarray

    def __post_init__(self) -> None:
        for name in ("actions", "weights", "betas", "factors", "rewards", "pv"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        t_total = self.rewards.size
        if self.pv.size != t_total + 1 or self.actions.shape[0] != t_total:
            raise EngineError("inconsistent backtest arrays")

    @property
    def n_steps(self) -> int:
        return self.rewards.size

    @property
    def final_pv(self) -> float:
        return float(self.pv[-1])

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "actions": self.actions.tolist(),
            "weights": self.weights.tolist(),
            "betas": self.betas.tolist(),
            "factors": self.factors.tolist(),
            "rewards": self.rewards.tolist(),
            "pv": self.pv.tolist(),
            "final_pv": self.final_pv,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BacktestResult":
        return cls(
            start_index=int(data["start_index"]),
            actions=np.asarray(data["actions"], dtype=float),
            weights=np.asarray(data["weights"], dtype=float),
            betas=np.asarray(data["betas"], dtype=float),
            factors=np.asarray(data["factors"], dtype=float),
            rewards=np.asarray(data["rewards"], dtype=float),
            pv=np.asarray(data["pv"], dtype=float),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "BacktestResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def run_backtest(
    prices: PriceSeries,
    policy,
    signals: SignalSeries | None = None,
    cm: CostModel | None = None,
    window: int = 30,
    p0: float = 1.0,
    lookback: int = 1,
) -> BacktestResult:
    """Run a policy over a price series, starting from all cash.

    The policy is called once per decision step with an AugmentedState and
    must return a simplex allocation.  The first window - 1 steps only feed
    history; the final step has no observable move, so a series of n steps
    yields n - window decisions.
    """
    cm = cm or CostModel()
    if prices.n_steps < window + 2:
        raise MarketDataError(
            f"series of {prices.n_steps} steps too short for window {window}"
        )
    states = build_states(prices, signals, window=window, lookback=lookback)
    rel = relative_prices(prices).y
    m = prices.n_assets + 1
    actions = np.empty((len(states), m))
    for j, state in enumerate(states):
        actions[j] = as_simplex(policy(state), "action")
    rel_rows = rel[:, [s.t for s in states]].T
    chain = reward_chain(actions, rel_rows, all_cash(m), np.ones(m), cm)
    return BacktestResult(
        start_index=states[0].t,
        actions=actions,
        weights=chain.drifted,
        betas=chain.betas,
        factors=chain.factors,
        rewards=chain.rewards,
        pv=accumulate(chain.rewards, p0),
    )
