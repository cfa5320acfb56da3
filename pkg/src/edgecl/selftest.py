"""Built-in invariant battery behind ``edgecl selftest``.

A fast subset of the library's core contracts, printing one line per check.
The full verification lives in the pytest suite; this battery is meant for a
quick smoke in CI or on a fresh install.
"""

from __future__ import annotations

import math

import numpy as np

from . import lazytune as lt
from . import network as nn
from .cka import CkaTrack, cka, variation_rate
from .config import default_run_config, parse_policy
from .drift import DriftDetector, energy_score
from .harness import run
from .report import dumps_report


def _check(name: str, ok: bool, detail: str = "") -> bool:
    status = "ok" if ok else "FAIL"
    suffix = f" ({detail})" if detail and not ok else ""
    print(f"selftest: {name:<38} {status}{suffix}")
    return ok


def _gradient_check() -> bool:
    rng = np.random.default_rng(7)
    net = nn.init_network([3, 5, 4], 3, rng)
    x = rng.normal(size=(4, 3))
    y = rng.integers(0, 3, size=4)
    grads, _, _ = nn.backward(net, x, y)
    h = 1e-5
    worst = 0.0
    for lyr, g in zip(net.all_layers(), grads):
        dw = g[0]
        for idx in [(0, 0), (dw.shape[0] - 1, dw.shape[1] - 1)]:
            orig = lyr.weights[idx]
            lyr.weights[idx] = orig + h
            _, up, _ = nn.backward(net, x, y)
            lyr.weights[idx] = orig - h
            _, down, _ = nn.backward(net, x, y)
            lyr.weights[idx] = orig
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(dw[idx]), 1e-8)
            worst = max(worst, abs(numeric - dw[idx]) / denom)
    return worst < 1e-4


def _flop_check() -> bool:
    rng = np.random.default_rng(3)
    dims = [4, 6, 5]
    b = 2
    for mask in range(4):
        net = nn.init_network(dims, 3, rng)
        net.layers[0].frozen = bool(mask & 1)
        net.layers[1].frozen = bool(mask & 2)
        _, _, rep = nn.backward(net, rng.normal(size=(b, 4)), rng.integers(0, 3, size=b))
        per = [2 * b * 4 * 6, 2 * b * 6 * 5, 2 * b * 5 * 3]
        expected_fwd = sum(per)
        expected_wgt = sum(
            p for p, lyr in zip(per, net.all_layers()) if not lyr.frozen
        )
        first_active = next(i for i, lyr in enumerate(net.all_layers()) if not lyr.frozen)
        expected_act = sum(per[i] for i in range(first_active + 1, 3))
        if (rep.fwd_flops, rep.bwd_wgt_flops, rep.bwd_act_flops) != (
            expected_fwd, expected_wgt, expected_act,
        ):
            return False
    return True


def _cka_check() -> bool:
    rng = np.random.default_rng(11)
    x = rng.normal(size=(32, 6))
    y = rng.normal(size=(32, 4))
    ok = abs(cka(x, x) - 1.0) < 1e-9
    ok = ok and abs(cka(x, y) - cka(y, x)) < 1e-12
    ok = ok and abs(cka(3.0 * x, 0.5 * y) - cka(x, y)) < 1e-12
    ok = ok and 0.0 <= cka(x, y) <= 1.0 + 1e-9
    track = CkaTrack(0)
    ok = ok and math.isinf(variation_rate(track, 0.905, 100))
    ok = ok and abs(variation_rate(track, 0.906, 200) - 0.001 / 0.905) < 1e-12
    return ok


def _lazytune_check() -> bool:
    state = lt.TunerState(batches_needed=10.0)
    lt.on_inference(state)
    ok = abs(state.batches_needed - 10.0 * (1.0 - 1.0 / math.log(10.0))) < 1e-12
    state.batches_needed = 2.0
    lt.on_inference(state)
    ok = ok and state.batches_needed == 1.0
    state.batches_needed = 40.0
    lt.on_scenario_change(state)
    ok = ok and state.batches_needed == 1.0 and not state.history
    return ok


def _drift_check() -> bool:
    ok = abs(energy_score([0.0, 0.0]) - (-math.log(2.0))) < 1e-12
    ok = ok and abs(energy_score([1000.0, 0.0]) - (-1000.0)) < 1e-9
    det = DriftDetector(window=4, z_threshold=4.0)
    ok = ok and not any(det.observe(1.0) for _ in range(50))
    return ok


def _determinism_check() -> bool:
    cfg = default_run_config().with_policy(parse_policy("etuner"))
    cfg.workload.scenario_count = 3
    cfg.workload.train_batches_per_scenario = 20
    cfg.workload.total_inferences = 30
    cfg.network.pretrain_epochs = 1
    a = dumps_report(run(cfg))
    b = dumps_report(run(cfg))
    return a == b


def run_selftest() -> bool:
    checks = [
        ("gradients match finite differences", _gradient_check),
        ("flop counts match closed form", _flop_check),
        ("cka identities and variation rate", _cka_check),
        ("lazytune adjustment and reset", _lazytune_check),
        ("energy score and quiet detector", _drift_check),
        ("mini-run determinism", _determinism_check),
    ]
    all_ok = True
    for name, fn in checks:
        try:
            ok = fn()
            detail = ""
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            detail = repr(exc)
        all_ok = _check(name, ok, detail) and all_ok
    print(f"selftest: {'all checks passed' if all_ok else 'FAILURES detected'}")
    return all_ok
