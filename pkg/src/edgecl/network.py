"""Dense classification network with freeze-aware backprop and FLOP accounting.

The network is a stack of fully connected layers (``Network.layers``, the
feature extractor) followed by a linear classifier head. Every layer carries
a ``frozen`` flag. Freezing interacts with the backward pass in two ways:

* a frozen layer's weight/bias gradients are never computed, and
* once every layer below some depth is frozen, back-propagation stops there:
  no activation gradients are computed for the maximal frozen prefix.

``FlopReport`` counts the dominant matrix-multiply work of one pass under the
convention that a multiply-accumulate is 2 FLOPs; bias additions and
activation functions are ignored. ``activation_mem_units`` counts the array
elements that must be retained between the forward and backward pass
(layer inputs for active layers, ReLU masks where activation gradients flow),
so it shrinks as the frozen prefix grows.

A lightweight CopyWeights-with-Reinit scheme (``CwrBank``) consolidates
classifier-head rows across training rounds to limit forgetting: at the start
of a round the head rows for the round's classes are re-initialised from the
bank (or zeros for unseen classes), and at the end of the round the trained
rows are merged back by seen-count-weighted averaging. Evaluation always uses
the consolidated head.

All arithmetic is float64.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError

ACTIVATIONS = ("relu", "identity")


@dataclass
class FlopReport:
    """FLOP and retained-activation counts for one forward or training pass."""

    fwd_flops: int = 0
    bwd_act_flops: int = 0
    bwd_wgt_flops: int = 0
    activation_mem_units: int = 0

    def total_flops(self) -> int:
        return self.fwd_flops + self.bwd_act_flops + self.bwd_wgt_flops

    def __add__(self, other: "FlopReport") -> "FlopReport":
        return FlopReport(
            self.fwd_flops + other.fwd_flops,
            self.bwd_act_flops + other.bwd_act_flops,
            self.bwd_wgt_flops + other.bwd_wgt_flops,
            max(self.activation_mem_units, other.activation_mem_units),
        )


@dataclass
class DenseLayer:
    """One fully connected layer: ``out = act(x @ weights + bias)``."""

    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "relu"
    frozen: bool = False

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class Network:
    """Feature layers plus a linear classifier head over ``class_count`` classes."""

    layers: list[DenseLayer]
    head: DenseLayer
    class_count: int

    def all_layers(self) -> list[DenseLayer]:
        return self.layers + [self.head]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def frozen_mask(self) -> list[bool]:
        return [lyr.frozen for lyr in self.layers]

    def clone(self) -> "Network":
        return copy.deepcopy(self)


@dataclass
class CwrBank:
    """Consolidated classifier-head rows, one per class seen so far.

    ``consolidated`` maps class id -> (weight column of shape (head_in,),
    bias scalar); ``seen_counts`` maps class id -> number of rounds the class
    has been merged.
    """

    consolidated: dict[int, tuple[np.ndarray, float]] = field(default_factory=dict)
    seen_counts: dict[int, int] = field(default_factory=dict)

    def classes(self) -> set[int]:
        return set(self.consolidated)

    def clone(self) -> "CwrBank":
        return CwrBank(
            {c: (w.copy(), b) for c, (w, b) in self.consolidated.items()},
            dict(self.seen_counts),
        )


def init_network(layer_dims: list[int], class_count: int, seed: int | np.random.Generator) -> Network:
    """Build a network with the given feature-layer widths.

    ``layer_dims`` lists the input dimension followed by each hidden width,
    e.g. ``[64, 128, 128]`` gives two ReLU feature layers 64->128->128 plus a
    128->class_count identity head. Weights are uniform in
    +-sqrt(6 / (in + out)), biases zero.
    """
    if len(layer_dims) < 2:
        raise InputError("need at least an input dim and one hidden width")
    if class_count < 2:
        raise InputError("class_count must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def make(in_dim: int, out_dim: int, activation: str) -> DenseLayer:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(in_dim, out_dim)).astype(np.float64)
        return DenseLayer(w, np.zeros(out_dim, dtype=np.float64), activation)

    layers = [
        make(layer_dims[i], layer_dims[i + 1], "relu")
        for i in range(len(layer_dims) - 1)
    ]
    head = make(layer_dims[-1], class_count, "identity")
    return Network(layers, head, class_count)


def _as_batch(batch: np.ndarray, expected_cols: int) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != expected_cols:
        raise ShapeError(f"batch has {x.shape[1]} columns, network expects {expected_cols}")
    return x


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "identity":
        return z
    raise InputError(f"unknown activation {activation!r}")


def forward(
    net: Network, batch: np.ndarray, capture: bool = False
) -> tuple[np.ndarray, list[np.ndarray] | None, FlopReport]:
    """Run the forward pass.

    Returns ``(logits, feats, report)``. When ``capture`` is true, ``feats``
    holds the post-activation output of every feature layer (one
    samples x features matrix per layer); otherwise it is None.
    """
    x = _as_batch(batch, net.input_dim)
    b = x.shape[0]
    feats: list[np.ndarray] | None = [] if capture else None
    fwd = 0
    for lyr in net.all_layers():
        if x.shape[1] != lyr.in_dim:
            raise ShapeError(f"layer expects {lyr.in_dim} inputs, got {x.shape[1]}")
        z = x @ lyr.weights + lyr.bias
        x = _apply_activation(z, lyr.activation)
        fwd += 2 * b * lyr.in_dim * lyr.out_dim
        if capture and lyr is not net.head:
            feats.append(x.copy())
    return x, feats, FlopReport(fwd_flops=fwd)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(labels: np.ndarray, batch_rows: int, class_count: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != batch_rows:
        raise ShapeError(f"labels must be a vector of length {batch_rows}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == y.astype(np.int64)):
            raise InputError("labels must be integers")
        y = y.astype(np.int64)
    if y.min(initial=0) < 0 or y.max(initial=0) >= class_count:
        raise InputError(f"label out of range [0, {class_count})")
    return y.astype(np.int64)


def backward(
    net: Network, batch: np.ndarray, labels: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray] | None], float, FlopReport]:
    """One training pass: forward, softmax cross-entropy, freeze-aware backward.

    Returns ``(grads, loss, report)`` where ``grads`` is aligned with
    ``net.layers + [net.head]`` and holds ``(dW, db)`` for active layers and
    None for frozen ones. The report includes the internal forward pass.

    Frozen layers get no weight gradients, and no activation gradients are
    computed at or below the first active layer (back-propagation stops
    there), so the maximal frozen prefix costs nothing in the backward pass.
    """
    x = _as_batch(batch, net.input_dim)
    b = x.shape[0]
    all_layers = net.all_layers()
    y = _check_labels(labels, b, net.class_count)

    inputs: list[np.ndarray] = []
    zs: list[np.ndarray] = []
    fwd = 0
    for lyr in all_layers:
        inputs.append(x)
        z = x @ lyr.weights + lyr.bias
        zs.append(z)
        x = _apply_activation(z, lyr.activation)
        fwd += 2 * b * lyr.in_dim * lyr.out_dim

    logp = _log_softmax(x)
    loss = float(-logp[np.arange(b), y].mean())
    d = np.exp(logp)
    d[np.arange(b), y] -= 1.0
    d /= b  # gradient w.r.t. logits (head output)

    # Back-prop stops at the first active layer; everything below is skipped.
    first_active = next(i for i, lyr in enumerate(all_layers) if not lyr.frozen)

    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(all_layers)
    wgt = 0
    act = 0
    mem = 0
    for i in range(len(all_layers) - 1, first_active - 1, -1):
        lyr = all_layers[i]
        if lyr.activation == "relu":
            dz = d * (zs[i] > 0)
            mem += b * lyr.out_dim  # ReLU mask retained
        else:
            dz = d
        if not lyr.frozen:
            grads[i] = (inputs[i].T @ dz, dz.sum(axis=0))
            wgt += 2 * b * lyr.in_dim * lyr.out_dim
            mem += b * lyr.in_dim  # layer input retained for the weight gradient
        if i > first_active:
            d = dz @ lyr.weights.T
            act += 2 * b * lyr.in_dim * lyr.out_dim

    return grads, loss, FlopReport(fwd, act, wgt, mem)


def sgd_step(
    net: Network,
    grads: list[tuple[np.ndarray, np.ndarray] | None],
    lr: float,
    head_lr_scale: float = 1.0,
) -> Network:
    """Apply ``w <- w - lr * g`` to active layers in place; frozen layers are untouched.

    ``head_lr_scale`` multiplies the learning rate for the classifier head,
    letting its rows converge within short rounds so that head consolidation
    averages near-converged rows rather than partial updates.
    """
    if lr <= 0 or head_lr_scale <= 0:
        raise InputError("learning rates must be positive")
    for lyr, g in zip(net.all_layers(), grads):
        if g is None:
            continue
        if lyr.frozen:
            raise InputError("gradient supplied for a frozen layer")
        step = lr * head_lr_scale if lyr is net.head else lr
        dw, db = g
        lyr.weights -= step * dw
        lyr.bias -= step * db
    return net


def train_step(
    net: Network,
    batch: np.ndarray,
    labels: np.ndarray,
    lr: float,
    head_lr_scale: float = 1.0,
) -> tuple[float, FlopReport]:
    """Convenience wrapper: one backward pass plus an SGD update."""
    grads, loss, report = backward(net, batch, labels)
    sgd_step(net, grads, lr, head_lr_scale)
    return loss, report


def cwr_start_round(net: Network, bank: CwrBank, classes_in_round: set[int]) -> None:
    """Re-initialise head rows for a training round.

    Rows for classes in the round come from the bank (or zeros for classes
    never seen); rows for every other class are zeroed so the round cannot
    disturb them in a way that outlives the round.
    """
    for c in classes_in_round:
        if c < 0 or c >= net.class_count:
            raise InputError(f"class id {c} out of range")
    net.head.weights[:] = 0.0
    net.head.bias[:] = 0.0
    for c in classes_in_round:
        if c in bank.consolidated:
            w, b = bank.consolidated[c]
            net.head.weights[:, c] = w
            net.head.bias[c] = b


DEFAULT_MERGE_CAP = 8


def cwr_end_round(
    net: Network,
    bank: CwrBank,
    classes_in_round: set[int],
    merge_cap: int = DEFAULT_MERGE_CAP,
) -> None:
    """Merge the round's trained head rows into the bank.

    Merging is a seen-count-weighted average, so a class trained in rounds
    r1 and r2 consolidates to (r1 + r2) / 2. The weight of the old
    consolidated row saturates at ``merge_cap`` rounds: past that point the
    bank becomes an exponential moving average, so the head keeps tracking
    the model instead of freezing into an all-history average.
    """
    if merge_cap < 1:
        raise InputError("merge_cap must be >= 1")
    for c in sorted(classes_in_round):
        live_w = net.head.weights[:, c].copy()
        live_b = float(net.head.bias[c])
        if c in bank.consolidated:
            n = min(bank.seen_counts[c], merge_cap)
            old_w, old_b = bank.consolidated[c]
            bank.consolidated[c] = (
                (old_w * n + live_w) / (n + 1),
                (old_b * n + live_b) / (n + 1),
            )
            bank.seen_counts[c] += 1
        else:
            bank.consolidated[c] = (live_w, live_b)
            bank.seen_counts[c] = 1


def consolidated_head(net: Network, bank: CwrBank) -> tuple[np.ndarray, np.ndarray]:
    """Head weights/bias with every row taken from the bank (zeros if unseen)."""
    w = np.zeros_like(net.head.weights)
    b = np.zeros_like(net.head.bias)
    for c, (col, bias) in bank.consolidated.items():
        w[:, c] = col
        b[c] = bias
    return w, b


def predict_logits(
    net: Network,
    bank: CwrBank | None,
    data: np.ndarray,
    live_classes: set[int] | None = None,
) -> np.ndarray:
    """Logits for ``data`` under the CWR serving rule.

    With a bank, head rows come from the consolidated bank except for
    ``live_classes`` (the classes trained in the most recent round), whose
    freshly trained live rows are used directly. With ``bank=None`` the live
    head is used for everything (no-CWR mode).
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("prediction needs a nonempty 2-D data matrix")
    h = x
    for lyr in net.layers:
        h = _apply_activation(h @ lyr.weights + lyr.bias, lyr.activation)
    if bank is None:
        return h @ net.head.weights + net.head.bias
    w, b = consolidated_head(net, bank)
    for c in live_classes or ():
        w[:, c] = net.head.weights[:, c]
        b[c] = net.head.bias[c]
    return h @ w + b


def evaluate(
    net: Network,
    bank: CwrBank | None,
    data: np.ndarray,
    labels: np.ndarray,
    live_classes: set[int] | None = None,
) -> float:
    """Fraction of argmax-correct predictions under the CWR serving rule."""
    logits = predict_logits(net, bank, data, live_classes)
    y = _check_labels(labels, logits.shape[0], net.class_count)
    return float((logits.argmax(axis=1) == y).mean())


def train_iteration_flops(layer_dims: list[int], class_count: int, batch_size: int) -> int:
    """Closed-form FLOPs of one all-active training iteration (fwd + bwd)."""
    dims = list(layer_dims) + [class_count]
    per_layer = [2 * batch_size * dims[i] * dims[i + 1] for i in range(len(dims) - 1)]
    fwd = sum(per_layer)
    wgt = sum(per_layer)
    act = sum(per_layer[1:])  # no gradient w.r.t. the raw input data
    return fwd + wgt + act
