"""Lazy fine-tuning-round triggering.

The controller keeps a real-valued threshold ``batches_needed``. A round
fires once the accumulated batch count reaches its ceiling. Three signals
move the threshold:

* After each round, a validation-error curve ``e(t) = 1/(b0*t + b1) + b2``
  is fitted to the (cumulative iterations, validation accuracy) history and
  the threshold becomes the smallest batch count whose predicted accuracy
  gain matches the round that just finished. Slowing convergence therefore
  stretches the gap between rounds.
* Every completed inference request shrinks the threshold via
  ``d <- d * (1 - 1/ln d)``, so request bursts pull tuning forward.
* A detected scenario change resets the threshold to 1 (immediate tuning)
  and clears the fitted curve, since the convergence trajectory restarts.

The threshold stays in [1, cap] at all times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import InputError

DEFAULT_CAP = 64


@dataclass
class CurveFit:
    """Validation-error model ``e(t) = 1/(beta0*t + beta1) + beta2``, betas >= 0."""

    beta0: float
    beta1: float
    beta2: float
    fit_residual: float

    def error_at(self, t: float) -> float:
        return 1.0 / (self.beta0 * t + self.beta1) + self.beta2

    def accuracy_at(self, t: float) -> float:
        return 1.0 - self.error_at(t)


@dataclass
class TunerState:
    """Mutable trigger state: threshold, accumulated batches, accuracy history."""

    batches_needed: float = 1.0
    batches_ava: int = 0
    history: list[tuple[int, float]] = field(default_factory=list)
    curve: CurveFit | None = None
    cap: int = DEFAULT_CAP


def should_trigger(state: TunerState) -> bool:
    """True once the available batches reach ceil(batches_needed)."""
    return state.batches_ava >= math.ceil(state.batches_needed)


def fit_error_curve(
    history: list[tuple[int, float]], beta2_step: float = 0.01
) -> CurveFit | None:
    """Fit the error model to (cumulative iterations, accuracy) points.

    The floor term beta2 is grid-searched over {0, beta2_step, ...} below the
    smallest observed error; for each candidate the remaining model is linear
    in (beta0, beta1) after the substitution 1/(e - beta2) = beta0*t + beta1
    and is solved with scipy's non-negative least squares. The candidate with
    the smallest residual in the original error space wins. Returns None when
    no candidate yields a usable (finite, positive-denominator) model.
    """
    if len(history) < 3:
        return None
    t = np.array([p[0] for p in history], dtype=np.float64)
    err = np.clip(1.0 - np.array([p[1] for p in history], dtype=np.float64), 1e-6, None)
    best: CurveFit | None = None
    beta2 = 0.0
    while beta2 < err.min():
        target = 1.0 / (err - beta2)
        a = np.column_stack([t, np.ones_like(t)])
        coef, _ = nnls(a, target)
        beta0, beta1 = float(coef[0]), float(coef[1])
        if beta0 == 0.0 and beta1 == 0.0:
            beta2 += beta2_step
            continue
        with np.errstate(divide="ignore"):
            denom = beta0 * t + beta1
            pred = np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0) + beta2, np.inf)
        residual = float(np.sum((pred - err) ** 2))
        if math.isfinite(residual) and (best is None or residual < best.fit_residual):
            best = CurveFit(beta0, beta1, beta2, residual)
        beta2 += beta2_step
    return best


def record_round(state: TunerState, iterations_this_round: int, val_accuracy: float) -> TunerState:
    """Append a finished round's (cumulative iterations, accuracy) point and refit."""
    if not (0.0 <= val_accuracy <= 1.0):
        raise InputError(f"validation accuracy {val_accuracy} outside [0, 1]")
    if iterations_this_round < 1:
        raise InputError("a round must contain at least one iteration")
    cum = (state.history[-1][0] if state.history else 0) + iterations_this_round
    state.history.append((cum, val_accuracy))
    if len(state.history) >= 3:
        state.curve = fit_error_curve(state.history)
    return state


def estimate_batches_needed(
    state: TunerState, last_gain: float, iters_per_batch: int
) -> float:
    """Smallest batch count predicted to repeat the last round's accuracy gain.

    Scans n = 1..cap on the fitted curve and returns the first n whose
    predicted accuracy improvement reaches ``last_gain``; the cap if the gain
    is unreachable (e.g. a saturated curve); the current threshold unchanged
    when no curve has been fitted yet.
    """
    if iters_per_batch < 1:
        raise InputError("iters_per_batch must be >= 1")
    curve = state.curve
    if curve is None:
        return state.batches_needed
    t0 = state.history[-1][0] if state.history else 0
    base = curve.accuracy_at(t0)
    for n in range(1, state.cap + 1):
        if curve.accuracy_at(t0 + n * iters_per_batch) - base >= last_gain:
            return float(n)
    return float(state.cap)


def on_inference(state: TunerState) -> TunerState:
    """Shrink the threshold after a completed inference request.

    Applies ``d <- d * (1 - 1/ln d)``; for d <= e the factor is non-positive,
    so the threshold drops straight to 1. Never goes below 1.
    """
    d = state.batches_needed
    if d > math.e:
        d = d * (1.0 - 1.0 / math.log(d))
    else:
        d = 1.0
    state.batches_needed = max(d, 1.0)
    return state


def on_scenario_change(state: TunerState) -> TunerState:
    """Reset to immediate tuning: threshold 1, history and curve cleared.

    Accumulated batches are kept — data is never dropped, and with the
    threshold back at 1 they trigger a round at the next opportunity.
    """
    state.batches_needed = 1.0
    state.history.clear()
    state.curve = None
    return state
