"""Linear Centered Kernel Alignment between two feature matrices.

Given two feature matrices X (samples x fx) and Y (samples x fy) produced by
running the same probe inputs through two layers, the similarity is

    cka(X, Y) = ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F)

where Xc, Yc are the column-mean-centered matrices. Centering is what gives
the score its [0, 1] range (Cauchy-Schwarz) and its invariance to isotropic
scaling, orthogonal rotation of feature axes, and constant feature offsets.
The implementation works with the equivalent sample-space Gram matrices
Kx = Xc Xc^T and Ky = Yc Yc^T, for which

    ||Yc^T Xc||_F^2 = <Kx, Ky>   and   ||Xc^T Xc||_F = ||Kx||_F,

which makes the score exactly symmetric in floating point and cheap when the
probe batch is small relative to the feature width.

``CkaTrack`` records a layer's score over training iterations;
``variation_rate`` turns a new measurement into the relative change against
the immediately previous one, which is what the freezing controller compares
against its stability threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InputError, ShapeError

# relative-change denominators are floored here so a near-zero previous CKA
# cannot produce a division blow-up
VARIATION_EPS = 1e-6

# float slack above the exact [0, 1] bound
CKA_TOLERANCE = 1e-9


def _centered(mat: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(mat, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    if x.shape[0] < 2:
        raise InputError(f"{name} needs at least 2 samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite values")
    return x - x.mean(axis=0)


def cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear CKA between two feature matrices on the same probe samples."""
    xc = _centered(x, "x")
    yc = _centered(y, "y")
    if xc.shape[0] != yc.shape[0]:
        raise ShapeError(
            f"sample counts differ: x has {xc.shape[0]}, y has {yc.shape[0]}"
        )
    kx = xc @ xc.T
    ky = yc @ yc.T
    denom_x = float(np.linalg.norm(kx))
    denom_y = float(np.linalg.norm(ky))
    if denom_x == 0.0 or denom_y == 0.0:
        raise DegenerateInputError("feature matrix is zero after centering")
    return float(np.sum(kx * ky)) / (denom_x * denom_y)


def cka_pair_flops(samples: int, features_x: int, features_y: int) -> int:
    """Dominant cost of one cka() call: the two sample-space Gram products."""
    return 2 * samples * samples * (features_x + features_y)


@dataclass
class CkaTrack:
    """CKA history of one layer: (iteration, score) pairs plus the last variation."""

    layer_id: int
    history: list[tuple[int, float]] = field(default_factory=list)
    last_variation: float | None = None

    def reset(self) -> None:
        self.history.clear()
        self.last_variation = None


def variation_rate(track: CkaTrack, new_cka: float, iteration: int) -> float:
    """Record a measurement and return its relative change vs. the previous one.

    Returns ``|new - prev| / max(prev, eps)``, or +inf when the track has no
    previous measurement — a layer is never considered stable on first sight.
    """
    if not (0.0 <= new_cka <= 1.0 + CKA_TOLERANCE):
        raise InputError(f"cka value {new_cka} outside [0, 1]")
    if track.history and iteration <= track.history[-1][0]:
        raise InputError(
            f"iteration {iteration} not after previous {track.history[-1][0]}"
        )
    prev = track.history[-1][1] if track.history else None
    track.history.append((iteration, new_cka))
    if prev is None:
        return math.inf
    rate = abs(new_cka - prev) / max(prev, VARIATION_EPS)
    track.last_variation = rate
    return rate
