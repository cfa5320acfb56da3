"""Lazy-trigger state machine: thresholds, curve fitting, adjustments."""

import math

import numpy as np
import pytest

from edgecl import lazytune as lt


def make_history(beta0, beta1, beta2, times):
    """Accuracy points sampled exactly from the error model."""
    return [(t, 1.0 - (1.0 / (beta0 * t + beta1) + beta2)) for t in times]


class TestShouldTrigger:
    def test_initial_threshold_matches_immediate(self):
        state = lt.TunerState()
        assert state.batches_needed == 1.0
        state.batches_ava = 1
        assert lt.should_trigger(state)

    def test_ceiling_rule(self):
        state = lt.TunerState(batches_needed=5.66, batches_ava=5)
        assert not lt.should_trigger(state)
        state.batches_ava = 6
        assert lt.should_trigger(state)


class TestCurveFit:
    def test_too_few_points(self):
        state = lt.TunerState()
        lt.record_round(state, 10, 0.5)
        lt.record_round(state, 10, 0.6)
        assert state.curve is None
        assert state.batches_needed == 1.0

    def test_recovers_noiseless_model(self):
        times = list(range(50, 550, 50))
        history = make_history(0.02, 1.0, 0.10, times)
        fit = lt.fit_error_curve(history)
        assert fit is not None
        assert fit.beta0 == pytest.approx(0.02, abs=1e-3)
        assert fit.beta1 == pytest.approx(1.0, abs=1e-3)
        assert fit.beta2 == pytest.approx(0.10, abs=1e-3)

    def test_noisy_non_monotone_fit_is_nonnegative(self):
        rng = np.random.default_rng(0)
        times = list(range(20, 220, 20))
        history = [
            (t, min(1.0, max(0.0, a + rng.normal(0, 0.03))))
            for t, a in make_history(0.05, 0.8, 0.05, times)
        ]
        fit = lt.fit_error_curve(history)
        assert fit is not None
        assert fit.beta0 >= 0 and fit.beta1 >= 0 and fit.beta2 >= 0

    def test_fitted_error_non_increasing(self):
        fit = lt.fit_error_curve(make_history(0.02, 1.0, 0.1, [50, 100, 150, 200]))
        grid = np.linspace(0, 2000, 200)
        errors = [fit.error_at(t) for t in grid]
        assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


class TestEstimate:
    def brute_force(self, curve, t0, last_gain, iters_per_batch, cap):
        """Independent oracle: scan predicted accuracies directly."""
        base = 1.0 - (1.0 / (curve.beta0 * t0 + curve.beta1) + curve.beta2)
        for n in range(1, cap + 1):
            t = t0 + n * iters_per_batch
            acc = 1.0 - (1.0 / (curve.beta0 * t + curve.beta1) + curve.beta2)
            if acc - base >= last_gain:
                return float(n)
        return float(cap)

    def test_zero_gain_gives_one(self):
        state = lt.TunerState()
        for t, a in make_history(0.02, 1.0, 0.1, [50, 100, 150]):
            lt.record_round(state, 50, a)
        assert lt.estimate_batches_needed(state, 0.0, 1) == 1.0

    def test_matches_brute_force_on_given_curve(self):
        state = lt.TunerState()
        for t, a in make_history(0.02, 1.0, 0.1, list(range(50, 550, 50))):
            lt.record_round(state, 50, a)
        got = lt.estimate_batches_needed(state, 0.005, 1)
        expected = self.brute_force(state.curve, 500, 0.005, 1, state.cap)
        assert got == expected

    def test_matches_brute_force_on_random_curves(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            curve = lt.CurveFit(
                beta0=float(rng.uniform(0.0005, 0.1)),
                beta1=float(rng.uniform(0.5, 5.0)),
                beta2=float(rng.uniform(0.0, 0.3)),
                fit_residual=0.0,
            )
            t0 = int(rng.integers(10, 2000))
            state = lt.TunerState(history=[(t0, 1.0 - curve.error_at(t0))], curve=curve)
            gain = float(rng.uniform(0.0, 0.02))
            ipb = int(rng.integers(1, 5))
            got = lt.estimate_batches_needed(state, gain, ipb)
            assert got == self.brute_force(curve, t0, gain, ipb, state.cap)

    def test_saturated_curve_returns_cap(self):
        curve = lt.CurveFit(beta0=0.0, beta1=2.0, beta2=0.1, fit_residual=0.0)
        state = lt.TunerState(history=[(100, 1.0 - curve.error_at(100))], curve=curve)
        assert lt.estimate_batches_needed(state, 0.01, 1) == float(state.cap)

    def test_no_curve_returns_current(self):
        state = lt.TunerState(batches_needed=7.5)
        assert lt.estimate_batches_needed(state, 0.01, 1) == 7.5


class TestOnInference:
    def test_logarithmic_decrement(self):
        state = lt.TunerState(batches_needed=10.0)
        lt.on_inference(state)
        expected = 10.0 * (1.0 - 1.0 / math.log(10.0))
        assert state.batches_needed == pytest.approx(expected, abs=1e-12)
        assert state.batches_needed == pytest.approx(5.65706, abs=1e-5)

    def test_small_threshold_guard(self):
        state = lt.TunerState(batches_needed=2.0)  # 1 - 1/ln 2 < 0
        lt.on_inference(state)
        assert state.batches_needed == 1.0

    def test_floor_is_noop(self):
        state = lt.TunerState(batches_needed=1.0)
        lt.on_inference(state)
        assert state.batches_needed == 1.0

    def test_strictly_decreasing_above_e(self):
        state = lt.TunerState(batches_needed=50.0)
        previous = state.batches_needed
        for _ in range(30):
            lt.on_inference(state)
            if previous > math.e:
                assert state.batches_needed < previous
            previous = state.batches_needed
            assert state.batches_needed >= 1.0


class TestScenarioChange:
    def test_reset_to_one(self):
        state = lt.TunerState(batches_needed=40.0)
        lt.on_scenario_change(state)
        assert state.batches_needed == 1.0

    def test_reset_of_one_is_noop(self):
        state = lt.TunerState(batches_needed=1.0)
        lt.on_scenario_change(state)
        assert state.batches_needed == 1.0

    def test_history_cleared(self):
        state = lt.TunerState()
        for i in range(10):
            lt.record_round(state, 10, 0.5 + 0.01 * i)
        lt.on_scenario_change(state)
        assert state.history == [] and state.curve is None


class TestThresholdRangeProperty:
    def test_random_event_sequences_stay_in_range(self):
        # random walks over the full operation alphabet never leave [1, cap]
        rng = np.random.default_rng(2024)
        for _ in range(2000):
            state = lt.TunerState(cap=int(rng.integers(2, 128)))
            for _ in range(30):
                op = rng.integers(0, 4)
                if op == 0:
                    lt.on_inference(state)
                elif op == 1:
                    lt.on_scenario_change(state)
                elif op == 2:
                    lt.record_round(state, int(rng.integers(1, 50)), float(rng.uniform(0, 1)))
                else:
                    gain = float(rng.uniform(-0.05, 0.1))
                    state.batches_needed = min(
                        max(lt.estimate_batches_needed(state, gain, 1), 1.0),
                        float(state.cap),
                    )
                assert 1.0 <= state.batches_needed <= state.cap
