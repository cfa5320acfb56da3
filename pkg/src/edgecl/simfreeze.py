"""Similarity-guided layer freezing and unfreezing.

The controller snapshots the network at the start of continual learning and
keeps that snapshot as the reference for the whole run. Each scenario's first
training batch becomes the probe: running the probe through both the live
network and the reference yields per-layer feature matrices whose CKA is the
layer's self-representational similarity.

Freezing (within a scenario): every ``freeze_interval`` training iterations
the controller measures CKA for each still-active feature layer and freezes
those whose relative CKA change since the previous measurement is at or below
the stability threshold. Frozen layers are skipped entirely — no CKA is spent
on them — so the controller's own cost shrinks as the model converges. A
layer is never frozen on its first measurement.

Unfreezing (at a scenario change): with the new scenario's first batch as the
fresh probe, each frozen layer's CKA is recomputed and compared against its
value from the previous scenario; layers whose similarity moved by at least
the threshold are thawed so they can adapt, and their history restarts.

Probe forward passes and CKA arithmetic are metered in ``pending_cka_flops``
so the cost ledger can charge the controller's overhead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cka import CkaTrack, cka, cka_pair_flops, variation_rate, VARIATION_EPS
from .errors import InputError, StateError
from .network import Network, forward

DEFAULT_FREEZE_INTERVAL = 200
DEFAULT_STABILITY_THRESHOLD = 0.01


@dataclass
class FreezeController:
    """Per-run freezing state: reference snapshot, probe, thresholds, CKA tracks."""

    reference_net: Network
    freeze_interval: int = DEFAULT_FREEZE_INTERVAL
    stability_threshold: float = DEFAULT_STABILITY_THRESHOLD
    tracks: list[CkaTrack] = field(default_factory=list)
    probe_batch: np.ndarray | None = None
    prev_scenario_cka: dict[int, float] = field(default_factory=dict)
    pending_cka_flops: int = 0

    def __post_init__(self) -> None:
        if self.freeze_interval < 1:
            raise InputError("freeze_interval must be >= 1")
        if not (0.0 < self.stability_threshold < 1.0):
            raise InputError("stability_threshold must be in (0, 1)")
        if not self.tracks:
            self.tracks = [CkaTrack(i) for i in range(len(self.reference_net.layers))]

    def drain_pending_flops(self) -> int:
        flops, self.pending_cka_flops = self.pending_cka_flops, 0
        return flops


def make_controller(
    net: Network,
    freeze_interval: int = DEFAULT_FREEZE_INTERVAL,
    stability_threshold: float = DEFAULT_STABILITY_THRESHOLD,
) -> FreezeController:
    """Snapshot ``net`` as the reference model and build a controller for it."""
    return FreezeController(
        reference_net=net.clone(),
        freeze_interval=freeze_interval,
        stability_threshold=stability_threshold,
    )


def _probe_features(
    ctrl: FreezeController, net: Network, probe: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    _, cur_feats, rep_cur = forward(net, probe, capture=True)
    _, ref_feats, rep_ref = forward(ctrl.reference_net, probe, capture=True)
    ctrl.pending_cka_flops += rep_cur.fwd_flops + rep_ref.fwd_flops
    return cur_feats, ref_feats


def maybe_freeze(ctrl: FreezeController, net: Network, iteration: int) -> list[int]:
    """Freeze every active feature layer whose CKA has stabilised.

    Must be called at a multiple of ``freeze_interval``. The classifier head
    is never frozen. Returns the ids of newly frozen layers.
    """
    if iteration < 1 or iteration % ctrl.freeze_interval != 0:
        raise InputError(
            f"iteration {iteration} is not a positive multiple of freeze_interval"
        )
    active = [i for i, lyr in enumerate(net.layers) if not lyr.frozen]
    if not active:
        return []
    if ctrl.probe_batch is None:
        raise StateError("no probe batch: no training data has arrived this scenario")
    cur_feats, ref_feats = _probe_features(ctrl, net, ctrl.probe_batch)
    samples = ctrl.probe_batch.shape[0]
    newly_frozen: list[int] = []
    for i in active:
        value = cka(cur_feats[i], ref_feats[i])
        ctrl.pending_cka_flops += cka_pair_flops(
            samples, cur_feats[i].shape[1], ref_feats[i].shape[1]
        )
        rate = variation_rate(ctrl.tracks[i], value, iteration)
        ctrl.prev_scenario_cka[i] = value
        if rate <= ctrl.stability_threshold:
            net.layers[i].frozen = True
            newly_frozen.append(i)
    return newly_frozen


def on_scenario_change(
    ctrl: FreezeController, net: Network, new_probe: np.ndarray
) -> list[int]:
    """Adopt the new scenario's probe and thaw frozen layers that became unstable.

    Each frozen layer's fresh CKA (on the new probe) is compared with its
    stored previous-scenario value; a relative change at or above the
    stability threshold unfreezes the layer and resets its track. Returns the
    ids of unfrozen layers.
    """
    probe = np.asarray(new_probe, dtype=np.float64)
    if probe.ndim != 2 or probe.shape[0] == 0:
        raise InputError("new probe must be a nonempty 2-D batch")
    ctrl.probe_batch = probe
    frozen = [i for i, lyr in enumerate(net.layers) if lyr.frozen]
    if not frozen:
        return []
    cur_feats, ref_feats = _probe_features(ctrl, net, probe)
    samples = probe.shape[0]
    unfrozen: list[int] = []
    for i in frozen:
        value = cka(cur_feats[i], ref_feats[i])
        ctrl.pending_cka_flops += cka_pair_flops(
            samples, cur_feats[i].shape[1], ref_feats[i].shape[1]
        )
        prev = ctrl.prev_scenario_cka.get(i)
        # a frozen layer always has a stored value; treat a missing one as unstable
        change = (
            abs(value - prev) / max(prev, VARIATION_EPS) if prev is not None else float("inf")
        )
        ctrl.prev_scenario_cka[i] = value
        if change >= ctrl.stability_threshold:
            net.layers[i].frozen = False
            ctrl.tracks[i].reset()
            unfrozen.append(i)
    return unfrozen
