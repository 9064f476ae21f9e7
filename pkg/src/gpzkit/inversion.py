"""Reconstruction probe: how invertible is each intermediate state?

A small MLP decoder is trained to map a layer's activations back to the
network inputs on an auxiliary index split, then scored by MSE/PSNR on the
held-out split.  Sweeping the probe across layers with a fixed decoder
budget isolates the layer effect: states that have shed input detail
reconstruct strictly worse than early, near-invertible ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset
from .micronet import MlpModel, TrainResult, extract, forward_batch, init_model, train_regression

__all__ = [
    "DecoderConfig",
    "LayerProbe",
    "InversionReport",
    "partition_indices",
    "train_decoder",
    "evaluate",
    "sweep_layers",
]


@dataclass(frozen=True)
class DecoderConfig:
    """Shared decoder budget: identical architecture and schedule per layer."""

    hidden: tuple[int, ...] = (64,)
    epochs: int = 600
    lr: float = 0.2
    batch: int = 16
    aux_fraction: float = 0.7

    def validate(self) -> None:
        if any(h < 1 for h in self.hidden):
            raise ValueError("decoder hidden widths must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 < self.aux_fraction < 1.0:
            raise ValueError("aux_fraction must lie strictly between 0 and 1")

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "epochs": self.epochs,
            "lr": self.lr,
            "batch": self.batch,
            "aux_fraction": self.aux_fraction,
        }


def partition_indices(n: int, aux_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (aux, eval) index partition of range(n) by shuffled prefix."""
    if n < 2:
        raise ValueError("need at least two samples to partition")
    n_aux = int(math.floor(n * aux_fraction))
    if n_aux < 1 or n_aux >= n:
        raise ValueError(f"aux_fraction {aux_fraction} leaves an empty split for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_aux]), np.sort(perm[n_aux:])


def train_decoder(acts: np.ndarray, targets: np.ndarray, hidden: tuple[int, ...],
                  epochs: int, lr: float, batch: int, seed: int) -> TrainResult:
    """Fit an MLP decoder (squared error, identity head) from acts to targets.

    Layer activations differ in scale by orders of magnitude across depths,
    so the decoder is trained on standardized inputs (training-split mean,
    single training-split RMS scale) and the affine transform is folded into
    its first layer afterwards.  Every layer therefore gets the identical
    optimization budget while the returned model still consumes raw
    activations.
    """
    acts = np.asarray(acts, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if acts.ndim != 2 or targets.ndim != 2 or acts.shape[0] != targets.shape[0]:
        raise ValueError("acts and targets must be (N, d) / (N, d0) with equal N")
    mean = acts.mean(axis=0)
    scale = float(np.sqrt(np.mean((acts - mean) ** 2)))
    if scale == 0.0:  # constant activations: leave inputs centered only
        scale = 1.0
    decoder = init_model([acts.shape[1], *hidden], k=targets.shape[1], seed=seed)
    result = train_regression(decoder, (acts - mean) / scale, targets,
                              epochs=epochs, lr=lr, batch=batch, seed=seed)
    first = result.model.layers[0]
    folded_w = first.weight.astype(np.float64) / scale
    folded_b = first.bias.astype(np.float64) - folded_w @ mean
    first.weight = folded_w.astype(np.float32)
    first.bias = folded_b.astype(np.float32)
    return result


def evaluate(decoder: MlpModel, acts: np.ndarray, inputs: np.ndarray) -> tuple[float, float]:
    """Reconstruction (mse, psnr_db) of a decoder on one batch.

    PSNR uses MAX = 1 (inputs live in [0,1]); perfect reconstruction maps
    to the +inf sentinel rather than an error.
    """
    acts = np.asarray(acts, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    if acts.shape[0] == 0:
        raise ValueError("empty evaluation batch")
    if acts.shape[0] != inputs.shape[0]:
        raise ValueError("acts/inputs length mismatch")
    recon = forward_batch(decoder, acts)[-1]
    if recon.shape != inputs.shape:
        raise ValueError("decoder output shape does not match the inputs")
    mse = float(np.mean((recon - inputs) ** 2))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return mse, psnr


@dataclass
class LayerProbe:
    """One layer's probe outcome under the shared decoder budget."""

    layer_name: str
    d: int
    train_mse: float
    test_mse: float
    test_psnr: float

    def to_dict(self) -> dict:
        return {
            "layer": self.layer_name,
            "d": self.d,
            "train_mse": self.train_mse,
            "test_mse": self.test_mse,
            "test_psnr": self.test_psnr,
        }


@dataclass
class InversionReport:
    """Per-layer reconstruction quality for one model/dataset/config triple."""

    probes: list[LayerProbe]
    config: DecoderConfig
    seed: int
    n_aux: int
    n_test: int
    loss_curves: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "layers": [p.to_dict() for p in self.probes],
            "config": {**self.config.to_dict(), "seed": self.seed},
            "split": {"aux": self.n_aux, "test": self.n_test},
        }


def sweep_layers(model: MlpModel, dataset: Dataset, layers, config: DecoderConfig,
                 seed: int) -> InversionReport:
    """Probe every requested layer with one fixed aux/eval partition.

    The same decoder architecture, schedule, and seed are used at each
    layer, so differences in reconstruction error are attributable to the
    layer itself.
    """
    config.validate()
    acts = extract(model, dataset, layers)
    n = dataset.inputs.shape[0]
    aux_idx, test_idx = partition_indices(n, config.aux_fraction, seed)
    joined = np.concatenate([aux_idx, test_idx])
    if len(np.intersect1d(aux_idx, test_idx)) or not np.array_equal(np.sort(joined), np.arange(n)):
        raise AssertionError("aux/eval index sets must partition the dataset")
    inputs = dataset.inputs.astype(np.float64)
    probes: list[LayerProbe] = []
    curves: list[list[float]] = []
    for batch in acts.layers:
        data = batch.data.astype(np.float64)
        result = train_decoder(data[aux_idx], inputs[aux_idx], config.hidden,
                               config.epochs, config.lr, config.batch, seed)
        train_mse, _ = evaluate(result.model, data[aux_idx], inputs[aux_idx])
        test_mse, test_psnr = evaluate(result.model, data[test_idx], inputs[test_idx])
        probes.append(LayerProbe(layer_name=batch.layer_name, d=batch.d,
                                 train_mse=train_mse, test_mse=test_mse,
                                 test_psnr=test_psnr))
        curves.append(result.loss_curve)
    return InversionReport(probes=probes, config=config, seed=seed,
                           n_aux=int(aux_idx.size), n_test=int(test_idx.size),
                           loss_curves=curves)
