"""Scenario-change detection from energy scores of inference logits.

The energy score of a logit vector f is ``-T * log(sum_i exp(f_i / T))``.
A model that recognises its input produces one dominant logit and a very
negative score; out-of-distribution inputs flatten the logits and push the
score up. The detector keeps running statistics of past scores as a baseline
and fires when the mean of the most recent ``window`` scores rises more than
``z_threshold`` baseline standard deviations above the baseline mean. After a
firing the baseline restarts from the post-change window and the detector
stays quiet for one refractory window.

An ``oracle`` mode bypasses score-based detection entirely; the experiment
harness then fires the scenario handlers exactly at the workload's labelled
boundaries, which isolates scheduling behaviour from detector quality.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.special import logsumexp

from .errors import InputError

DEFAULT_TEMPERATURE = 1.0
DEFAULT_WINDOW = 16
DEFAULT_Z_THRESHOLD = 4.0

MODES = ("energy", "oracle")


def energy_score(logits: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """``-T * log sum_i exp(f_i / T)``, computed stably for any logit scale."""
    if temperature <= 0:
        raise InputError("temperature must be positive")
    f = np.asarray(logits, dtype=np.float64).ravel()
    if f.size == 0:
        raise InputError("logits must be nonempty")
    return float(-temperature * logsumexp(f / temperature))


class _RunningStats:
    """Welford accumulator for the baseline mean/std."""

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    @property
    def std(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self._m2 / (self.count - 1)))


class DriftDetector:
    """Windowed z-score detector over a stream of energy scores."""

    def __init__(
        self,
        temperature: float = DEFAULT_TEMPERATURE,
        window: int = DEFAULT_WINDOW,
        z_threshold: float = DEFAULT_Z_THRESHOLD,
        mode: str = "energy",
    ):
        if window < 4:
            raise InputError("window must be >= 4")
        if z_threshold <= 0:
            raise InputError("z_threshold must be positive")
        if temperature <= 0:
            raise InputError("temperature must be positive")
        if mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        self.temperature = temperature
        self.window = window
        self.z_threshold = z_threshold
        self.mode = mode
        self._recent: deque[float] = deque()
        self._baseline = _RunningStats()
        self._refractory = 0

    @property
    def baseline_mean(self) -> float:
        return self._baseline.mean

    @property
    def baseline_std(self) -> float:
        return self._baseline.std

    def score(self, logits: np.ndarray) -> float:
        return energy_score(logits, self.temperature)

    def observe(self, score: float) -> bool:
        """Feed one score; True when a scenario change is detected.

        In oracle mode the score stream is ignored and this never fires —
        boundary events drive the scenario handlers instead.
        """
        if self.mode == "oracle":
            return False
        # the oldest score leaves the comparison window and joins the baseline
        if len(self._recent) == self.window:
            self._baseline.add(self._recent.popleft())
        self._recent.append(float(score))
        if self._refractory > 0:
            self._refractory -= 1
            return False
        if len(self._recent) < self.window or self._baseline.count < self.window:
            return False
        window_mean = float(np.mean(self._recent))
        if window_mean > self._baseline.mean + self.z_threshold * self._baseline.std:
            self._baseline = _RunningStats()
            for value in self._recent:
                self._baseline.add(value)
            self._recent.clear()
            self._refractory = self.window
            return True
        return False

    def observe_logits(self, logits_rows: np.ndarray) -> bool:
        """Score each logit row and observe it; True if any observation fires."""
        fired = False
        for row in np.atleast_2d(np.asarray(logits_rows, dtype=np.float64)):
            fired = self.observe(self.score(row)) or fired
        return fired
