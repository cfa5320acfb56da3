"""Network core: forward/backward oracles, freezing, CWR, determinism."""

import numpy as np
import pytest

from edgecl import network as nn
from edgecl.errors import InputError, ShapeError


def finite_difference_grads(net, x, y, h=1e-5):
    """Central-difference gradient of the loss w.r.t. every weight and bias."""

    def loss_at():
        _, loss, _ = nn.backward(_all_active_clone(net), x, y)
        return loss

    out = []
    for lyr in net.all_layers():
        dw = np.zeros_like(lyr.weights)
        for idx in np.ndindex(*lyr.weights.shape):
            orig = lyr.weights[idx]
            lyr.weights[idx] = orig + h
            up = loss_at()
            lyr.weights[idx] = orig - h
            down = loss_at()
            lyr.weights[idx] = orig
            dw[idx] = (up - down) / (2 * h)
        db = np.zeros_like(lyr.bias)
        for i in range(lyr.bias.shape[0]):
            orig = lyr.bias[i]
            lyr.bias[i] = orig + h
            up = loss_at()
            lyr.bias[i] = orig - h
            down = loss_at()
            lyr.bias[i] = orig
            db[i] = (up - down) / (2 * h)
        out.append((dw, db))
    return out


def _all_active_clone(net):
    clone = net.clone()
    for lyr in clone.all_layers():
        lyr.frozen = False
    return clone


def closed_form_flops(dims, class_count, batch, frozen_mask):
    """Independent FLOP oracle: per-layer 2*B*in*out, three backward cases."""
    widths = list(dims) + [class_count]
    per_layer = [2 * batch * widths[i] * widths[i + 1] for i in range(len(widths) - 1)]
    mask = list(frozen_mask) + [False]  # the head is never frozen
    fwd = sum(per_layer)
    wgt = sum(p for p, frozen in zip(per_layer, mask) if not frozen)
    first_active = mask.index(False)
    act = sum(per_layer[first_active + 1 :])
    return fwd, wgt, act


class TestForward:
    def test_identity_single_layer(self):
        layer = nn.DenseLayer(np.array([[1.0]]), np.array([0.0]), "identity")
        head = nn.DenseLayer(np.eye(1, 2), np.zeros(2), "identity")
        net = nn.Network([layer], head, 2)
        logits, _, _ = nn.forward(net, np.array([[3.0]]))
        assert logits[0, 0] == pytest.approx(3.0)

    def test_fwd_flop_count(self):
        net = nn.init_network([4, 8], 3, 0)
        _, _, rep = nn.forward(net, np.zeros((16, 4)))
        assert rep.fwd_flops == 2 * 16 * 4 * 8 + 2 * 16 * 8 * 3 == 1792

    def test_against_straight_line_matmul_oracle(self):
        rng = np.random.default_rng(42)
        net = nn.init_network([5, 7, 6], 4, 1)
        x = rng.normal(size=(9, 5))
        # independent re-implementation: plain matmul chain
        h = x
        for lyr in net.layers:
            h = np.maximum(h @ lyr.weights + lyr.bias, 0.0)
        expected = h @ net.head.weights + net.head.bias
        logits, _, _ = nn.forward(net, x)
        assert np.max(np.abs(logits - expected)) < 1e-12

    def test_capture_one_matrix_per_feature_layer(self):
        net = nn.init_network([5, 7, 6], 4, 1)
        x = np.random.default_rng(0).normal(size=(8, 5))
        _, feats, _ = nn.forward(net, x, capture=True)
        assert len(feats) == 2
        assert feats[0].shape == (8, 7) and feats[1].shape == (8, 6)

    def test_dimension_mismatch(self):
        net = nn.init_network([5, 7], 4, 1)
        with pytest.raises(ShapeError):
            nn.forward(net, np.zeros((3, 6)))


class TestBackward:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        net = nn.init_network([3, 4], 2, 5)
        x = rng.normal(size=(2, 3))
        y = np.array([0, 1])
        grads, _, _ = nn.backward(net, x, y)
        expected = finite_difference_grads(net, x, y)
        for (dw, db), (edw, edb) in zip(grads, expected):
            scale = np.maximum(np.abs(edw), 1e-6)
            assert np.max(np.abs(dw - edw) / scale) < 1e-4
            scale_b = np.maximum(np.abs(edb), 1e-6)
            assert np.max(np.abs(db - edb) / scale_b) < 1e-4

    def test_flops_all_active(self):
        net = nn.init_network([4, 8], 3, 0)
        _, _, rep = nn.backward(net, np.zeros((16, 4)), np.zeros(16, dtype=int))
        assert rep.bwd_wgt_flops == rep.fwd_flops
        assert rep.bwd_act_flops == rep.fwd_flops - 2 * 16 * 4 * 8

    def test_flops_frozen_first_layer(self):
        net = nn.init_network([4, 8], 3, 0)
        net.layers[0].frozen = True
        _, _, rep = nn.backward(net, np.zeros((16, 4)), np.zeros(16, dtype=int))
        assert rep.bwd_wgt_flops == 1792 - 2 * 16 * 4 * 8
        assert rep.bwd_act_flops == 0

    def test_flop_oracle_all_masks(self):
        # every freeze mask of nets with up to 4 feature layers
        rng = np.random.default_rng(3)
        for dims in ([4, 6], [4, 6, 5], [3, 5, 4, 4]):
            n_feature = len(dims) - 1
            for mask_bits in range(2 ** n_feature):
                mask = [(mask_bits >> i) & 1 == 1 for i in range(n_feature)]
                net = nn.init_network(dims, 3, rng)
                for lyr, frozen in zip(net.layers, mask):
                    lyr.frozen = frozen
                b = 2
                x = rng.normal(size=(b, dims[0]))
                y = rng.integers(0, 3, size=b)
                _, _, rep = nn.backward(net, x, y)
                fwd, wgt, act = closed_form_flops(dims, 3, b, mask)
                assert (rep.fwd_flops, rep.bwd_wgt_flops, rep.bwd_act_flops) == (fwd, wgt, act)

    def test_mem_units_decrease_with_frozen_prefix(self):
        rng = np.random.default_rng(4)
        dims = [4, 6, 5, 4]
        prev = None
        for prefix in range(4):
            net = nn.init_network(dims, 3, rng)
            for i in range(prefix):
                net.layers[i].frozen = True
            _, _, rep = nn.backward(net, rng.normal(size=(2, 4)), rng.integers(0, 3, size=2))
            if prev is not None:
                assert rep.activation_mem_units < prev
            prev = rep.activation_mem_units

    def test_frozen_layers_get_no_gradients(self):
        net = nn.init_network([4, 6, 5], 3, 0)
        net.layers[1].frozen = True
        grads, _, _ = nn.backward(net, np.zeros((2, 4)), np.zeros(2, dtype=int))
        assert grads[1] is None and grads[0] is not None and grads[2] is not None

    def test_freeze_non_interference(self):
        # active layers' gradients are identical whether frozen layers are
        # skipped or computed: compare against an all-active clone
        rng = np.random.default_rng(9)
        net = nn.init_network([4, 6, 5], 3, 7)
        net.layers[0].frozen = True
        x = rng.normal(size=(5, 4))
        y = rng.integers(0, 3, size=5)
        grads_frozen, _, _ = nn.backward(net, x, y)
        grads_all, _, _ = nn.backward(_all_active_clone(net), x, y)
        for gf, ga in zip(grads_frozen, grads_all):
            if gf is None:
                continue
            assert np.max(np.abs(gf[0] - ga[0])) < 1e-12
            assert np.max(np.abs(gf[1] - ga[1])) < 1e-12

    def test_label_out_of_range(self):
        net = nn.init_network([4, 6], 3, 0)
        with pytest.raises(InputError):
            nn.backward(net, np.zeros((2, 4)), np.array([0, 3]))


class TestSgdStep:
    def test_basic_update(self):
        layer = nn.DenseLayer(np.array([[1.0]]), np.array([0.0]), "identity")
        head = nn.DenseLayer(np.eye(1, 2), np.zeros(2), "identity")
        net = nn.Network([layer], head, 2)
        grads = [(np.array([[0.5]]), np.array([0.0])), None]
        nn.sgd_step(net, grads, 0.1)
        assert net.layers[0].weights[0, 0] == pytest.approx(0.95)

    def test_frozen_weights_bit_identical(self):
        net = nn.init_network([4, 6, 5], 3, 0)
        net.layers[0].frozen = True
        before = net.layers[0].weights.copy()
        x = np.random.default_rng(0).normal(size=(4, 4))
        y = np.random.default_rng(1).integers(0, 3, size=4)
        for _ in range(25):
            nn.train_step(net, x, y, 0.05)
        assert np.array_equal(net.layers[0].weights, before)

    def test_one_step_decreases_loss(self):
        rng = np.random.default_rng(2)
        net = nn.init_network([3, 4], 2, 5)
        x = rng.normal(size=(2, 3))
        y = np.array([0, 1])
        _, loss_before, _ = nn.backward(net, x, y)
        nn.train_step(net, x, y, 0.1)
        _, loss_after, _ = nn.backward(net, x, y)
        assert loss_after < loss_before


class TestCwr:
    def test_first_round_two_new_classes(self):
        net = nn.init_network([4, 6], 4, 0)
        bank = nn.CwrBank()
        nn.cwr_start_round(net, bank, {0, 1})
        net.head.weights[:, 0] = 1.0
        net.head.weights[:, 1] = 2.0
        nn.cwr_end_round(net, bank, {0, 1})
        assert bank.classes() == {0, 1}
        assert bank.seen_counts == {0: 1, 1: 1}

    def test_count_weighted_average(self):
        net = nn.init_network([4, 6], 4, 0)
        bank = nn.CwrBank()
        nn.cwr_start_round(net, bank, {2})
        r1 = np.arange(6, dtype=float)
        net.head.weights[:, 2] = r1
        net.head.bias[2] = 1.0
        nn.cwr_end_round(net, bank, {2})
        nn.cwr_start_round(net, bank, {2})
        r2 = np.ones(6) * 10.0
        net.head.weights[:, 2] = r2
        net.head.bias[2] = 3.0
        nn.cwr_end_round(net, bank, {2})
        w, b = bank.consolidated[2]
        assert np.allclose(w, (r1 + r2) / 2)
        assert b == pytest.approx(2.0)
        assert bank.seen_counts[2] == 2

    def test_start_round_restores_bank_rows(self):
        net = nn.init_network([4, 6], 4, 0)
        bank = nn.CwrBank()
        nn.cwr_start_round(net, bank, {0})
        net.head.weights[:, 0] = 5.0
        nn.cwr_end_round(net, bank, {0})
        net.head.weights[:, 0] = -99.0
        nn.cwr_start_round(net, bank, {0, 1})
        assert np.allclose(net.head.weights[:, 0], 5.0)  # restored from bank
        assert np.allclose(net.head.weights[:, 1], 0.0)  # unseen class -> zeros

    def test_cwr_mitigates_forgetting(self):
        # two-scenario toy: scenario 2 trains only new classes; accuracy on
        # scenario-1 classes stays higher with the consolidated head
        rng = np.random.default_rng(12)
        dims = 8
        means = {c: rng.normal(0, 3.0, size=dims) for c in range(4)}

        def pool(classes, count):
            y = rng.choice(classes, size=count)
            x = np.stack([means[c] for c in y]) + rng.normal(size=(count, dims))
            return x, y

        def train_run(use_cwr):
            net = nn.init_network([dims, 16], 4, 99)
            bank = nn.CwrBank() if use_cwr else None
            for classes in ([0, 1], [2, 3]):
                for _ in range(60):
                    x, y = pool(classes, 16)
                    if use_cwr:
                        nn.cwr_start_round(net, bank, set(classes))
                    nn.train_step(net, x, y, 0.1)
                    if use_cwr:
                        nn.cwr_end_round(net, bank, set(classes))
            test_x, test_y = pool([0, 1], 200)
            return nn.evaluate(net, bank, test_x, test_y)

        assert train_run(True) > train_run(False)


class TestEvaluate:
    def test_all_correct(self):
        net = nn.init_network([2, 4], 2, 0)
        bank = nn.CwrBank()
        bank.consolidated = {0: (np.ones(4), 0.0), 1: (-np.ones(4), 0.0)}
        bank.seen_counts = {0: 1, 1: 1}
        x = np.array([[1.0, 1.0], [1.0, 1.0]])
        # features are ReLU outputs >= 0; class-0 column dominates
        assert nn.evaluate(net, bank, x, np.array([0, 0])) in (0.0, 1.0)

    def test_single_wrong_prediction_is_zero(self):
        layer = nn.DenseLayer(np.eye(2), np.zeros(2), "identity")
        head = nn.DenseLayer(np.eye(2), np.zeros(2), "identity")
        net = nn.Network([layer], head, 2)
        assert nn.evaluate(net, None, np.array([[5.0, 0.0]]), np.array([1])) == 0.0

    def test_empty_data_rejected(self):
        net = nn.init_network([2, 4], 2, 0)
        with pytest.raises(InputError):
            nn.evaluate(net, None, np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_random_net_near_chance(self):
        # untrained nets on balanced 10-class data hover around 0.1
        rng = np.random.default_rng(0)
        accs = []
        for seed in range(20):
            net = nn.init_network([8, 16], 10, seed)
            x = rng.normal(size=(500, 8))
            y = rng.integers(0, 10, size=500)
            accs.append(nn.evaluate(net, None, x, y))
        assert abs(np.mean(accs) - 0.1) < 0.05


class TestDeterminism:
    def test_bit_identical_training(self):
        def run():
            net = nn.init_network([6, 12, 8], 4, 123)
            rng = np.random.default_rng(7)
            for _ in range(50):
                x = rng.normal(size=(8, 6))
                y = rng.integers(0, 4, size=8)
                nn.train_step(net, x, y, 0.05)
            return net

        a, b = run(), run()
        for la, lb in zip(a.all_layers(), b.all_layers()):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)
