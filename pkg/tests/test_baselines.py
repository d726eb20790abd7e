from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import random_simplex
from signalfolio.baselines import (
    CRPPolicy,
    OLMARPolicy,
    WMAMRPolicy,
    _history_from_state,
    crp_action,
    ew_policy,
    hold_cash_policy,
    olmar_action,
    simplex_project,
    wmamr_action,
)
from signalfolio.engine import CostModel, EngineError, run_backtest
from signalfolio.market import SyntheticMarketSpec, generate_synthetic, relative_prices
from signalfolio.signals import AugmentedState


def project_by_support_search(v: np.ndarray) -> np.ndarray:
    """Exact simplex projection by trying every support set."""
    d = v.size
    best, best_dist = None, np.inf
    for r in range(1, d + 1):
        for support in itertools.combinations(range(d), r):
            theta = (sum(v[i] for i in support) - 1.0) / r
            x = np.zeros(d)
            for i in support:
                x[i] = v[i] - theta
            if np.any(x[list(support)] < -1e-12):
                continue
            dist = float(((x - v) ** 2).sum())
            if dist < best_dist:
                best, best_dist = x, dist
    return best


class TestSimplexProject:
    def test_feasible_point_unchanged(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(simplex_project(v), v, atol=1e-12)

    def test_single_large_coordinate(self):
        assert np.allclose(simplex_project([2.0, 0.0]), [1.0, 0.0], atol=1e-12)

    def test_symmetric_excess_spread_evenly(self):
        out = simplex_project([0.5, 0.5, 0.5])
        assert np.allclose(out, 1.0 / 3.0, atol=1e-12)

    def test_matches_support_search(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            d = int(rng.integers(2, 5))
            v = rng.normal(0, 2, d)
            fast = simplex_project(v)
            exact = project_by_support_search(v)
            assert np.allclose(fast, exact, atol=1e-6)
            assert fast.min() >= 0
            assert abs(fast.sum() - 1.0) < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            once = simplex_project(rng.normal(0, 3, 4))
            twice = simplex_project(once)
            assert np.allclose(once, twice, atol=1e-12)

    def test_rejects_matrix_and_nan(self):
        with pytest.raises(EngineError):
            simplex_project(np.ones((2, 2)))
        with pytest.raises(EngineError):
            simplex_project([np.nan, 0.5])


class TestFixedMixPolicies:
    def test_crp_returns_target(self):
        target = np.array([0.1, 0.6, 0.3])
        assert np.array_equal(crp_action(target), target)

    def test_crp_rejects_off_simplex(self):
        with pytest.raises(EngineError):
            crp_action(np.array([0.6, 0.6]))

    def test_ew_is_uniform_crp(self):
        ew = ew_policy(4)
        crp = CRPPolicy(np.full(4, 0.25))
        state = object()
        assert np.array_equal(ew(state), crp(state))

    def test_policy_output_is_a_copy(self):
        policy = ew_policy(3)
        out = policy(object())
        out[0] = 99.0
        assert policy(object())[0] == pytest.approx(1.0 / 3.0)

    def test_hold_cash_backtest_flat(self, noisy_market):
        cm = CostModel(c_buy=0.005, c_sell=0.005)
        result = run_backtest(noisy_market, hold_cash_policy(3), None, cm, window=10)
        assert np.all(np.abs(result.pv - 1.0) <= 1e-12)

    def test_crp_matches_wealth_product(self, noisy_market):
        target = np.array([0.2, 0.5, 0.3])
        cm = CostModel(c_buy=0.0, c_sell=0.0)
        result = run_backtest(noisy_market, CRPPolicy(target), None, cm, window=10)
        rel = relative_prices(noisy_market).y
        wealth = 1.0
        for t in range(9, noisy_market.n_steps - 1):
            wealth *= float(target @ rel[:, t])
        assert result.final_pv == pytest.approx(wealth, rel=1e-10)


def olmar_reference(b, hist, epsilon, window):
    """Independent re-derivation used to replay the update rule."""
    b = np.asarray(b, float)
    hist = np.asarray(hist, float)
    if hist.shape[0] < window:
        return b.copy()
    predicted = np.zeros(b.size)
    for k in range(window):
        term = np.ones(b.size)
        for j in range(k + 1):
            term = term / hist[hist.shape[0] - 1 - j]
        predicted += term
    predicted /= window
    if float(b @ predicted) >= epsilon:
        return b.copy()
    centered = predicted - predicted.mean()
    nsq = float(centered @ centered)
    if nsq <= 1e-300:
        return b.copy()
    return project_by_support_search(b + (epsilon - float(b @ predicted)) / nsq * centered)


def wmamr_reference(b, hist, epsilon, window):
    b = np.asarray(b, float)
    hist = np.asarray(hist, float)
    if hist.shape[0] < window:
        return b.copy()
    avg = hist[-window:].mean(axis=0)
    loss = float(b @ avg) - epsilon
    if loss <= 0.0:
        return b.copy()
    centered = avg - avg.mean()
    nsq = float(centered @ centered)
    if nsq <= 1e-300:
        return b.copy()
    return project_by_support_search(b - (loss / nsq) * centered)


class TestOlmar:
    def test_insufficient_history_passthrough(self):
        b = np.array([0.3, 0.3, 0.4])
        hist = np.ones((2, 3))
        assert np.array_equal(olmar_action(b, hist, window=5), b)

    def test_flat_history_passthrough(self):
        b = np.array([0.3, 0.3, 0.4])
        assert np.array_equal(olmar_action(b, np.ones((6, 3)), window=5), b)

    def test_satisfied_constraint_passthrough(self):
        b = np.array([0.5, 0.5])
        hist = np.array([[1.0, 0.5], [1.0, 0.5], [1.0, 0.5]])
        # inverse relatives compound fast, so a tiny epsilon is already met
        assert np.array_equal(olmar_action(b, hist, epsilon=1.0, window=3), b)

    def test_small_step_stays_interior(self):
        # pre-projection vector sums to one by construction; with a gentle
        # step it stays nonnegative, so the projection is the identity and
        # the update is pure closed-form arithmetic
        b = np.array([0.25, 0.25, 0.25, 0.25])
        hist = np.array(
            [
                [1.0, 1.01, 0.99, 1.0],
                [1.0, 0.99, 1.02, 1.0],
                [1.0, 1.02, 0.98, 1.01],
            ]
        )
        eps = 1.003
        out = olmar_action(b, hist, epsilon=eps, window=3)
        predicted = np.cumprod(1.0 / hist[::-1], axis=0).mean(axis=0)
        centered = predicted - predicted.mean()
        step = (eps - float(b @ predicted)) / float(centered @ centered)
        expected = b + step * centered
        assert expected.min() >= 0
        assert np.allclose(out, expected, atol=1e-12)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_replay_matches_reference(self):
        rng = np.random.default_rng(77)
        b = np.full(4, 0.25)
        b_ref = b.copy()
        hist = np.hstack([np.ones((40, 1)), np.exp(rng.normal(0, 0.05, (40, 3)))])
        for t in range(5, 40):
            b = olmar_action(b, hist[:t], epsilon=10.0, window=5)
            b_ref = olmar_reference(b_ref, hist[:t], 10.0, 5)
            assert np.allclose(b, b_ref, atol=1e-10)

    def test_bad_inputs(self):
        b = np.array([0.5, 0.5])
        with pytest.raises(EngineError):
            olmar_action(b, np.ones((4, 3)))
        with pytest.raises(EngineError):
            olmar_action(b, np.ones((4, 2)), window=0)


class TestWmamr:
    def test_insufficient_history_passthrough(self):
        b = np.array([0.5, 0.5])
        assert np.array_equal(wmamr_action(b, np.ones((3, 2)), window=5), b)

    def test_flat_history_passthrough(self):
        # every average relative is one, so the loss is exactly epsilon - 1
        b = np.array([0.2, 0.8])
        assert np.array_equal(wmamr_action(b, np.ones((6, 2)), epsilon=1.0), b)

    def test_recent_winner_gets_trimmed(self):
        b = np.array([0.5, 0.5])
        hist = np.tile([1.0, 1.1], (5, 1))
        out = wmamr_action(b, hist, epsilon=1.0, window=5)
        assert out[1] < 0.5
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_window_one_uses_latest_row(self):
        b = np.array([0.5, 0.5])
        hist = np.array([[1.0, 0.5], [1.0, 1.3]])
        out = wmamr_action(b, hist, epsilon=1.0, window=1)
        expected = wmamr_reference(b, hist[-1:], 1.0, 1)
        assert np.allclose(out, expected, atol=1e-10)

    def test_replay_matches_reference(self):
        rng = np.random.default_rng(13)
        b = np.full(3, 1.0 / 3.0)
        b_ref = b.copy()
        hist = np.hstack([np.ones((30, 1)), np.exp(rng.normal(0.01, 0.08, (30, 2)))])
        for t in range(5, 30):
            b = wmamr_action(b, hist[:t], epsilon=1.0, window=5)
            b_ref = wmamr_reference(b_ref, hist[:t], 1.0, 5)
            assert np.allclose(b, b_ref, atol=1e-10)


class TestReversionPolicies:
    def _state(self, window_prices):
        w = np.asarray(window_prices, float)
        return AugmentedState(price_window=w, signal=None, t=w.shape[1] - 1)

    def test_history_extraction(self):
        window = np.array([[1.0, 2.0, 4.0], [3.0, 3.0, 1.5]])
        hist = _history_from_state(self._state(window))
        assert np.allclose(
            hist, [[1.0, 2.0, 1.0], [1.0, 2.0, 0.5]], atol=1e-12
        )

    def test_first_call_from_uniform(self):
        policy = OLMARPolicy(window=50)
        out = policy(self._state(np.ones((2, 6))))
        # too little history for the window, so the uniform start passes
        # straight through
        assert np.allclose(out, 1.0 / 3.0, atol=1e-12)

    def test_reset_restores_initial_state(self):
        rng = np.random.default_rng(4)
        prices = np.cumprod(1 + rng.normal(0, 0.05, (2, 12)), axis=1)
        policy = WMAMRPolicy(window=3)
        first = policy(self._state(prices))
        policy(self._state(prices * 1.1))
        policy.reset()
        again = policy(self._state(prices))
        assert np.array_equal(first, again)

    @pytest.mark.parametrize("cls", [OLMARPolicy, WMAMRPolicy])
    def test_backtest_outputs_valid(self, cls):
        spec = SyntheticMarketSpec(n_assets=3, n_steps=80, vol=0.03, seed=6)
        prices = generate_synthetic(spec)
        result = run_backtest(prices, cls(), None, CostModel(), window=12)
        assert np.all(result.actions >= 0)
        assert np.allclose(result.actions.sum(axis=1), 1.0, atol=1e-9)
        assert np.isfinite(result.final_pv)
