"""Minimal multilayer-perceptron engine.

Forward passes capture every intermediate state; training is plain
mini-batch SGD (no momentum) so that the first-order analyses downstream
describe exactly what the optimizer does.  The representation after ℓ
applied layers is "state ℓ": state 0 is the input, state L the logits
(the final layer is always identity — softmax lives in the loss).

Analytic Jacobians of the logits with respect to any state are products of
weight matrices and diagonal ReLU-derivative masks; the ReLU derivative at
exactly 0 is taken to be 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .activations import ActivationBatch, ActivationSet
from .datagen import Dataset

__all__ = [
    "RELU",
    "IDENTITY",
    "Layer",
    "MlpModel",
    "TargetScheme",
    "ForwardTrace",
    "TrainResult",
    "TrainingDiverged",
    "init_model",
    "make_targets",
    "forward",
    "loss_and_residual",
    "train",
    "train_regression",
    "jacobian",
    "extract",
    "count_params",
]

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in) float32
    bias: np.ndarray  # (out,) float32
    activation: str

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class MlpModel:
    layers: list[Layer]
    k: int
    split_index: int

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def state_dims(self) -> list[int]:
        """Width of every state 0..L (input, each post-layer output)."""
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    def copy(self) -> "MlpModel":
        return MlpModel([layer.copy() for layer in self.layers], self.k, self.split_index)

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("model must have at least one layer")
        for j, layer in enumerate(self.layers):
            if layer.activation not in _ACTIVATIONS:
                raise ValueError(f"layer {j}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ValueError(f"layer {j}: weight/bias shape mismatch")
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ValueError(f"layer {j}: non-finite parameters")
            if j and layer.in_dim != self.layers[j - 1].out_dim:
                raise ValueError(f"layer {j}: input width {layer.in_dim} does not chain "
                                 f"with previous output {self.layers[j - 1].out_dim}")
        if self.layers[-1].activation != IDENTITY:
            raise ValueError("last layer must use the identity activation")
        if self.layers[-1].out_dim != self.k:
            raise ValueError("last layer width must equal the class count")
        if not 0 <= self.split_index <= self.num_layers:
            raise ValueError("split_index out of range")


@dataclass(frozen=True)
class TargetScheme:
    """Classification target construction: one-hot or a smoothed variant.

    alpha may be negative (sharpened targets leave the simplex).  For
    prior-weighted smoothing, the off-class mass is distributed by the
    supplied class prior, renormalized to exclude the true class.
    """

    kind: str  # "onehot" | "label_smoothing" | "prior_smoothing"
    alpha: float = 0.0
    prior: tuple[float, ...] | None = None

    @staticmethod
    def onehot() -> "TargetScheme":
        return TargetScheme(kind="onehot")

    @staticmethod
    def label_smoothing(alpha: float) -> "TargetScheme":
        return TargetScheme(kind="label_smoothing", alpha=float(alpha))

    @staticmethod
    def prior_smoothing(alpha: float, prior: Sequence[float]) -> "TargetScheme":
        return TargetScheme(kind="prior_smoothing", alpha=float(alpha),
                            prior=tuple(float(p) for p in prior))

    @staticmethod
    def parse(text: str) -> "TargetScheme":
        """Parse a scheme string: "onehot", "ls:<alpha>" or "prior:<alpha>".

        A prior scheme parsed from text carries no prior vector yet; resolve
        one with `with_prior_from_labels` before building targets.
        """
        text = text.strip()
        if text == "onehot":
            return TargetScheme.onehot()
        for prefix, kind in (("ls:", "label_smoothing"), ("prior:", "prior_smoothing")):
            if text.startswith(prefix):
                try:
                    alpha = float(text[len(prefix):])
                except ValueError:
                    raise ValueError(f"bad scheme string {text!r}: alpha is not a number") from None
                if not math.isfinite(alpha):
                    raise ValueError(f"bad scheme string {text!r}: alpha must be finite")
                return TargetScheme(kind=kind, alpha=alpha)
        raise ValueError(f"bad scheme string {text!r}: expected 'onehot', 'ls:A' or 'prior:A'")

    def with_prior_from_labels(self, labels: np.ndarray, k: int) -> "TargetScheme":
        """Fill a prior-smoothing scheme's prior with the empirical label frequencies."""
        if self.kind != "prior_smoothing":
            return self
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=k).astype(np.float64)
        return TargetScheme(kind=self.kind, alpha=self.alpha,
                            prior=tuple(counts / counts.sum()))

    def describe(self) -> str:
        if self.kind == "onehot":
            return "onehot"
        if self.kind == "label_smoothing":
            return f"ls:{self.alpha:g}"
        return f"prior:{self.alpha:g}"


@dataclass
class ForwardTrace:
    """States 0..L for one sample plus softmax probabilities."""

    states: list[np.ndarray]  # float64; states[0]=x, states[-1]=logits
    preacts: list[np.ndarray]  # float64 pre-activation per layer
    probs: np.ndarray  # (K,) float64

    @property
    def logits(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class TrainResult:
    model: MlpModel
    loss_curve: list[float]
    final_accuracy: float | None = None


def init_model(arch: Sequence[int], k: int, seed: int,
               split_index: int | None = None) -> MlpModel:
    """Build an MLP from a width chain (input first), ReLU hidden, identity head.

    Weights are uniform on ±1/√fan_in, biases zero; a single seeded stream
    fills the layers in order, so identical arguments give identical models.
    """
    arch = [int(w) for w in arch]
    if not arch:
        raise ValueError("arch must be a nonempty width chain")
    if any(w < 1 for w in arch):
        raise ValueError("all widths must be >= 1")
    if k < 1:
        raise ValueError("class count K must be >= 1")
    widths = arch + [int(k)]
    rng = np.random.default_rng(seed)
    layers = []
    for j, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(np.float32)
        bias = np.zeros(fan_out, dtype=np.float32)
        act = IDENTITY if j == len(widths) - 2 else RELU
        layers.append(Layer(weight, bias, act))
    if split_index is None:
        split_index = max(len(layers) - 1, 0)
    model = MlpModel(layers=layers, k=int(k), split_index=int(split_index))
    model.validate()
    return model


def make_targets(labels: np.ndarray, scheme: TargetScheme, k: int) -> np.ndarray:
    """Build the (B, K) target matrix q for a batch of labels.

    Every row sums to 1 by construction: the true class gets 1−α and the
    off-class mass α is split uniformly (label smoothing) or by the
    renormalized class prior (prior smoothing).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("labels must lie in [0, K)")
    b = labels.shape[0]
    idx = np.arange(b)

    if scheme.kind == "onehot":
        q = np.zeros((b, k), dtype=np.float64)
        q[idx, labels] = 1.0
        return q

    alpha = float(scheme.alpha)
    if scheme.kind == "label_smoothing":
        if k == 1:
            raise ValueError("label smoothing is undefined for K=1")
        q = np.full((b, k), alpha / (k - 1), dtype=np.float64)
        q[idx, labels] = 1.0 - alpha
        return q

    if scheme.kind == "prior_smoothing":
        if scheme.prior is None:
            raise ValueError("prior smoothing requires a prior vector; "
                             "resolve one with with_prior_from_labels")
        prior = np.asarray(scheme.prior, dtype=np.float64)
        if prior.shape != (k,):
            raise ValueError(f"prior must have length K={k}")
        if (prior < 0).any() or not math.isclose(float(prior.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("prior must be nonnegative and sum to 1")
        used = np.unique(labels)
        if used.size and (prior[used] >= 1.0).any():
            raise ValueError("prior smoothing requires prior < 1 for every class present")
        # off-class distribution for row i: prior_k / (1 - prior_c)
        q = alpha * prior[None, :] / (1.0 - prior[labels])[:, None]
        q[idx, labels] = 1.0 - alpha
        return q

    raise ValueError(f"unknown scheme kind {scheme.kind!r}")


def _forward_arrays(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Batch forward in float64; returns (states 0..L, preacts per layer)."""
    a = np.asarray(x, dtype=np.float64)
    states = [a]
    preacts = []
    for layer in model.layers:
        pre = a @ layer.weight.T.astype(np.float64) + layer.bias.astype(np.float64)
        preacts.append(pre)
        a = np.maximum(pre, 0.0) if layer.activation == RELU else pre
        states.append(a)
    return states, preacts


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis (max subtraction)."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    return (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))[..., 0]


def forward(model: MlpModel, x: np.ndarray) -> ForwardTrace:
    """Single-sample forward pass capturing every state."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.layers[0].in_dim:
        raise ValueError(f"input dimension mismatch: expected ({model.layers[0].in_dim},), "
                         f"got {x.shape}")
    states, preacts = _forward_arrays(model, x[None, :])
    return ForwardTrace(states=[s[0] for s in states],
                        preacts=[p[0] for p in preacts],
                        probs=softmax(states[-1][0]))


def forward_batch(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """All states for a batch of rows, float64; element 0 is the input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layers[0].in_dim:
        raise ValueError(f"input batch shape mismatch: expected (n, {model.layers[0].in_dim}), "
                         f"got {x.shape}")
    states, _ = _forward_arrays(model, x)
    return states


def loss_and_residual(trace: ForwardTrace, q: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy against a target row and the logit residual p − q.

    The loss is evaluated through log-sum-exp of the logits, never through
    log(p), so it stays finite for any finite logits.
    """
    logits = np.asarray(trace.logits, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != logits.shape:
        raise ValueError("target row shape must match the logits")
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits: numeric failure upstream")
    loss = float(_logsumexp(logits) - q @ logits)
    return loss, trace.probs - q


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    # Per-epoch child streams make segmented training reproduce a single run.
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(epoch),)))


def loss_gradients(model: MlpModel, inputs: np.ndarray, targets: np.ndarray,
                   kind: str = "ce") -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean batch loss and per-layer (weight, bias) gradients, in float64.

    kind="ce" pairs softmax cross-entropy with logit targets from
    make_targets; kind="mse" is mean squared error over samples and output
    coordinates.  This is the exact computation the SGD loop applies.
    """
    if kind not in ("ce", "mse"):
        raise ValueError(f"unknown loss kind {kind!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or targets.ndim != 2 or inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets must be (N, d0) / (N, d_out) with equal N")
    states, preacts = _forward_arrays(model, inputs)
    logits = states[-1]
    nb = inputs.shape[0]
    if kind == "ce":
        p = softmax(logits)
        loss = float(np.mean(_logsumexp(logits) - np.einsum("bk,bk->b", targets, logits)))
        dlogits = (p - targets) / nb
    else:
        diff = logits - targets
        loss = float(np.mean(diff * diff))
        dlogits = 2.0 * diff / (nb * targets.shape[1])

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * model.num_layers
    delta = dlogits
    for j in range(model.num_layers - 1, -1, -1):
        layer = model.layers[j]
        grads[j] = (delta.T @ states[j], delta.sum(axis=0))
        if j:
            delta = delta @ layer.weight.astype(np.float64)
            if model.layers[j - 1].activation == RELU:
                delta = delta * (preacts[j - 1] > 0)
    return loss, grads


def _sgd(model: MlpModel, inputs: np.ndarray, targets: np.ndarray, *, kind: str,
         epochs: int, lr: float, batch: int, seed: int, epoch_offset: int) -> list[float]:
    """Shared SGD loop; kind selects the logit gradient (softmax-CE or MSE).

    Mutates `model` (callers pass a private copy).  Returns per-epoch mean loss.
    """
    n = inputs.shape[0]
    curve: list[float] = []
    for e in range(epochs):
        order = _epoch_rng(seed, epoch_offset + e).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            sel = order[start:start + batch]
            batch_loss, grads = loss_gradients(model, inputs[sel], targets[sel], kind)
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"training loss became non-finite at epoch {e + epoch_offset} "
                    f"(lr={lr}, batch={batch}); reduce the learning rate")
            epoch_loss += batch_loss * sel.shape[0] / n
            for layer, (gw, gb) in zip(model.layers, grads):
                layer.weight = (layer.weight.astype(np.float64) - lr * gw).astype(np.float32)
                layer.bias = (layer.bias.astype(np.float64) - lr * gb).astype(np.float32)
        curve.append(epoch_loss)
    return curve


def train(model: MlpModel, dataset: Dataset, scheme: TargetScheme, epochs: int,
          lr: float, batch: int, seed: int, epoch_offset: int = 0) -> TrainResult:
    """Mini-batch SGD on softmax cross-entropy; returns a new trained model.

    Deterministic given the seed; epoch_offset lets a run be split into
    segments that reproduce one continuous run exactly.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    model.validate()
    if dataset.k != model.k:
        raise ValueError("dataset class count does not match the model")
    scheme = scheme.with_prior_from_labels(dataset.labels, dataset.k)
    out = model.copy()
    inputs = dataset.inputs.astype(np.float64)
    targets = make_targets(dataset.labels, scheme, dataset.k)
    curve = _sgd(out, inputs, targets, kind="ce", epochs=epochs, lr=lr,
                 batch=batch, seed=seed, epoch_offset=epoch_offset)
    states, _ = _forward_arrays(out, inputs)
    accuracy = float(np.mean(np.argmax(states[-1], axis=1) == dataset.labels))
    return TrainResult(model=out, loss_curve=curve, final_accuracy=accuracy)


def train_regression(model: MlpModel, inputs: np.ndarray, targets: np.ndarray,
                     epochs: int, lr: float, batch: int, seed: int) -> TrainResult:
    """Mini-batch SGD on mean squared error (identity head); returns a new model."""
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    model.validate()
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs/targets length mismatch")
    if targets.ndim != 2 or targets.shape[1] != model.k:
        raise ValueError("targets must be (B, out) matching the model head")
    out = model.copy()
    curve = _sgd(out, inputs, targets, kind="mse", epochs=epochs, lr=lr,
                 batch=batch, seed=seed, epoch_offset=0)
    return TrainResult(model=out, loss_curve=curve, final_accuracy=None)


def jacobian(model: MlpModel, x: np.ndarray, layer: int) -> np.ndarray:
    """Jacobian of the logits with respect to state `layer`, as a (K, d) array.

    The product runs over every layer deeper than the requested state; each
    factor is the weight matrix with rows masked by the ReLU derivative at
    the recorded pre-activation (0 at exactly 0).
    """
    n_layers = model.num_layers
    if not 0 <= layer < n_layers:
        raise ValueError(f"layer index out of range: {layer} not in [0, {n_layers})")
    trace = forward(model, x)
    jac: np.ndarray | None = None
    for j in range(n_layers - 1, layer - 1, -1):
        factor = model.layers[j].weight.astype(np.float64)
        if model.layers[j].activation == RELU:
            factor = factor * (trace.preacts[j] > 0)[:, None]
        jac = factor if jac is None else jac @ factor
    assert jac is not None
    return jac


def extract(model: MlpModel, dataset: Dataset, layers: Sequence[int] | str = "all") -> ActivationSet:
    """Dump the requested states for every sample, in dataset order.

    `layers` is a list of state indices (0 = input, L = logits) or "all"
    for every post-layer state 1..L.  Activations are stored float32.
    """
    model.validate()
    n_layers = model.num_layers
    if isinstance(layers, str):
        if layers != "all":
            raise ValueError(f"bad layer selector {layers!r}")
        wanted = list(range(1, n_layers + 1))
    else:
        wanted = [int(l) for l in layers]
        if not wanted:
            raise ValueError("layer list must be nonempty")
        for l in wanted:
            if not 0 <= l <= n_layers:
                raise ValueError(f"layer index out of range: {l} not in [0, {n_layers}]")
    states, _ = _forward_arrays(model, dataset.inputs.astype(np.float64))
    labels = dataset.labels.astype(np.uint32)
    batches = []
    for l in wanted:
        data = states[l].astype(np.float32)
        batches.append(ActivationBatch(
            layer_name=f"z{l}",
            per_sample_shape=(int(data.shape[1]),),
            d=int(data.shape[1]),
            data=data,
            labels=labels,
        ))
    return ActivationSet(layers=batches, labels=labels, k=dataset.k)


def count_params(model: MlpModel, split_index: int) -> tuple[int, int, float]:
    """(edge parameters, total parameters, edge share) for a split."""
    if not 0 <= split_index <= model.num_layers:
        raise ValueError("split_index out of range")
    sizes = [layer.weight.size + layer.bias.size for layer in model.layers]
    edge = int(sum(sizes[:split_index]))
    total = int(sum(sizes))
    return edge, total, edge / total
