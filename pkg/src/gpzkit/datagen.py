"""Synthetic Gaussian-mixture datasets with controllable intra-class spread.

Class centers sit at evenly spaced points along the main diagonal of
[0.2, 0.8]^dim, so a single spread knob controls how much the classes
overlap.  Samples are clamped to [0, 1], which keeps the reconstruction
metrics' MAX=1 convention valid downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "class_centers", "gaussian_mixture"]


@dataclass(frozen=True)
class Dataset:
    """A labelled batch of inputs in [0, 1]^d0."""

    inputs: np.ndarray  # (B, d0) float32, clamped to [0, 1]
    labels: np.ndarray  # (B,) uint32, values in [0, K)
    k: int
    d0: int

    @property
    def b(self) -> int:
        return int(self.inputs.shape[0])

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("class count K must be >= 1")
        if self.d0 < 1:
            raise ValueError("input dimension d0 must be >= 1")
        if self.inputs.ndim != 2 or self.inputs.shape != (self.labels.shape[0], self.d0):
            raise ValueError("inputs must be a (B, d0) array aligned with labels")
        if self.b < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.isfinite(self.inputs).all():
            raise ValueError("inputs contain non-finite values")
        if self.inputs.min() < 0.0 or self.inputs.max() > 1.0:
            raise ValueError("inputs must lie in [0, 1]")
        if self.labels.size and int(self.labels.max()) >= self.k:
            raise ValueError("labels must be < K")


def class_centers(k: int, dim: int) -> np.ndarray:
    """Per-class centers: K evenly spaced points on the diagonal of [0.2, 0.8]^dim."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if k == 1:
        values = np.array([0.5])
    else:
        values = 0.2 + 0.6 * np.arange(k) / (k - 1)
    return np.repeat(values[:, None], dim, axis=1)


def gaussian_mixture(k: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Draw per_class samples around each class center with isotropic noise.

    Deterministic: identical arguments produce bit-identical output.  Classes
    are laid out contiguously (sample i has label i // per_class).
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if per_class < 2:
        raise ValueError("per_class must be >= 2 (class statistics need at least two samples)")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not math.isfinite(spread) or spread < 0:
        raise ValueError("spread must be a finite nonnegative real")

    centers = class_centers(k, dim)
    labels = np.repeat(np.arange(k, dtype=np.uint32), per_class)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((k * per_class, dim)) * spread
    inputs = np.clip(centers[labels] + noise, 0.0, 1.0).astype(np.float32)
    return Dataset(inputs=inputs, labels=labels, k=int(k), d0=int(dim))
