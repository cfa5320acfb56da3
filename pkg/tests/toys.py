"""Shared toy constructions for freezing-controller tests.

The drifted toy mirrors the controller's real life cycle: pre-train on a base
task, snapshot the reference, adapt to a rotated variant of the task (so the
live network genuinely diverges from the reference), freeze layers once their
CKA stabilises, then present a scenario change whose probe either matches the
training distribution or is rotated a further 90 degrees.
"""

from __future__ import annotations

import copy

import numpy as np

from edgecl import network as nn
from edgecl import simfreeze as sf

TOY_DIMS = 16
TOY_CLASSES = 3


def rotate_means(means: dict[int, np.ndarray], degrees: float) -> dict[int, np.ndarray]:
    theta = np.deg2rad(degrees)
    out = {}
    for c, m in means.items():
        r = m.copy()
        r[0] = np.cos(theta) * m[0] - np.sin(theta) * m[1]
        r[1] = np.sin(theta) * m[0] + np.cos(theta) * m[1]
        out[c] = r
    return out


def planar_means(scale: float = 3.0) -> dict[int, np.ndarray]:
    """Class means on a circle in the first coordinate plane."""
    means = {}
    for c in range(TOY_CLASSES):
        m = np.zeros(TOY_DIMS)
        angle = 2.0 * np.pi * c / TOY_CLASSES
        m[0], m[1] = scale * np.cos(angle), scale * np.sin(angle)
        means[c] = m
    return means


def make_batch(rng, means, sigma: float, batch_size: int):
    labels = np.repeat(np.arange(TOY_CLASSES), batch_size // TOY_CLASSES)
    x = np.stack([means[int(c)] for c in labels]) + sigma * rng.normal(
        size=(len(labels), TOY_DIMS)
    )
    return x, labels


def drifted_freeze_toy(
    seed: int,
    drift_degrees: float = 42.0,
    sigma: float = 0.3,
    batch_size: int = 240,
    lr: float = 0.05,
    freeze_interval: int = 200,
    lead_in: int = 1200,
    max_iterations: int = 5000,
):
    """Train through a drift, freeze everything, and return the pieces.

    Returns ``(net, ctrl, rng, means_now, all_frozen)`` positioned right
    before a scenario change.
    """
    rng = np.random.default_rng(seed)
    base = planar_means()

    net = nn.init_network([TOY_DIMS, 24, 16], TOY_CLASSES, seed)
    for _ in range(400):
        x, y = make_batch(rng, base, sigma, batch_size)
        nn.train_step(net, x, y, lr)

    ctrl = sf.make_controller(net, freeze_interval=freeze_interval, stability_threshold=0.01)
    drifted = rotate_means(base, drift_degrees)
    probe, _ = make_batch(rng, drifted, sigma, batch_size)
    sf.on_scenario_change(ctrl, net, probe)

    for _ in range(lead_in):
        x, y = make_batch(rng, drifted, sigma, batch_size)
        nn.train_step(net, x, y, lr)

    iteration = 0
    while iteration < max_iterations and not all(l.frozen for l in net.layers):
        x, y = make_batch(rng, drifted, sigma, batch_size)
        nn.train_step(net, x, y, lr)
        iteration += 1
        if iteration % freeze_interval == 0:
            sf.maybe_freeze(ctrl, net, iteration)

    all_frozen = all(l.frozen for l in net.layers)
    return net, ctrl, rng, drifted, all_frozen


def scenario_change_outcome(net, ctrl, rng, means, sigma=0.3, batch_size=240, rotate_by=None):
    """Apply a scenario change with a same-distribution or rotated probe.

    Works on copies, so one toy run can test both outcomes.
    """
    net_copy = net.clone()
    ctrl_copy = copy.deepcopy(ctrl)
    probe_means = rotate_means(means, rotate_by) if rotate_by else means
    probe, _ = make_batch(rng, probe_means, sigma, batch_size)
    return sf.on_scenario_change(ctrl_copy, net_copy, probe)
