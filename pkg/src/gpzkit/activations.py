"""Containers for per-layer activation dumps.

An ActivationBatch holds one layer's representations for a whole batch,
flattened to (B, d) single precision; an ActivationSet is the ordered
shallow-to-deep collection produced by a model sweep, carrying the shared
labels and class count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ActivationBatch", "ActivationSet"]


@dataclass
class ActivationBatch:
    layer_name: str
    per_sample_shape: tuple[int, ...]
    d: int
    data: np.ndarray  # (B, d) float32
    labels: np.ndarray  # (B,) uint32

    def validate(self) -> None:
        shape_prod = 1
        for extent in self.per_sample_shape:
            shape_prod *= int(extent)
        if not self.per_sample_shape or shape_prod != self.d:
            raise ValueError(
                f"layer {self.layer_name!r}: d={self.d} does not equal "
                f"product of per_sample_shape {self.per_sample_shape}"
            )
        if self.data.ndim != 2 or self.data.shape[1] != self.d:
            raise ValueError(f"layer {self.layer_name!r}: data must be (B, {self.d})")
        if self.data.shape[0] != self.labels.shape[0]:
            raise ValueError(f"layer {self.layer_name!r}: data/labels length mismatch")
        if not np.isfinite(self.data).all():
            raise ValueError(f"layer {self.layer_name!r}: non-finite activations")

    @property
    def b(self) -> int:
        return int(self.data.shape[0])


@dataclass
class ActivationSet:
    layers: list[ActivationBatch] = field(default_factory=list)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint32))
    k: int = 0

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("activation set has no layers")
        if self.k < 1:
            raise ValueError("class count must be >= 1")
        if self.labels.size and int(self.labels.max()) >= self.k:
            raise ValueError("labels must be < class count")
        for batch in self.layers:
            batch.validate()
            if batch.b != self.labels.shape[0]:
                raise ValueError(f"layer {batch.layer_name!r}: batch size mismatch")

    @property
    def layer_names(self) -> list[str]:
        return [b.layer_name for b in self.layers]
