"""Class-conditional statistics of intermediate representations.

For each layer: class means, the intra-class mean-squared radius
R_c² = (1/N_c)·Σ‖z − μ_c‖² (the trace of the biased class covariance),
its class average, the dimension-normalized radius R²/d, and the pooled
per-dimension variance σ²_feat = tr(Σ_batch)/d.  All accumulation happens
in float64 over the float32 activations, because radius differences at
deep layers are small.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .activations import ActivationBatch, ActivationSet
from .gpz import LayerRadiusProfile

__all__ = ["ActivationBatch", "ClassEntry", "ClassStats", "class_stats",
           "normalized_radius", "layer_profiles"]


@dataclass
class ClassEntry:
    c: int
    n: int
    mu: np.ndarray  # (d,) float64
    r2: float


@dataclass
class ClassStats:
    per_class: list[ClassEntry]  # classes with n >= 2, ascending label
    skipped: list[int]  # classes present with a single sample
    sigma2_feat: float  # pooled per-dimension variance over the whole batch
    r2_class_avg: float
    d: int
    b: int


def class_stats(batch: ActivationBatch) -> ClassStats:
    """Per-class means and radii plus pooled variance for one layer's batch.

    Classes with fewer than two samples cannot contribute a radius; they are
    skipped with a warning.  The pooled variance uses the biased (1/B)
    covariance over the entire batch, skipped classes included.
    """
    batch.validate()
    z = batch.data.astype(np.float64)
    labels = np.asarray(batch.labels, dtype=np.int64)
    b, d = z.shape

    mu_global = z.mean(axis=0)
    sigma2_feat = float(np.mean((z - mu_global) ** 2))  # == tr(biased cov)/d

    entries: list[ClassEntry] = []
    skipped: list[int] = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            skipped.append(int(c))
            continue
        zc = z[idx]
        mu_c = zc.mean(axis=0)
        r2 = float(np.mean(((zc - mu_c) ** 2).sum(axis=1)))
        entries.append(ClassEntry(c=int(c), n=int(idx.size), mu=mu_c, r2=r2))
    if skipped:
        warnings.warn(f"layer {batch.layer_name!r}: skipping classes {skipped} "
                      f"with fewer than 2 samples", RuntimeWarning, stacklevel=2)
    if not entries:
        raise ValueError(f"layer {batch.layer_name!r}: no class has at least 2 samples")

    r2_avg = float(np.mean([e.r2 for e in entries]))
    return ClassStats(per_class=entries, skipped=skipped, sigma2_feat=sigma2_feat,
                      r2_class_avg=r2_avg, d=int(d), b=int(b))


def normalized_radius(r2: float, d: int) -> float:
    """Dimension-normalized radius R²/d."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if r2 < 0:
        raise ValueError("radius must be nonnegative")
    return float(r2) / float(d)


def layer_profiles(acts: ActivationSet) -> list[LayerRadiusProfile]:
    """Class-averaged radius profile per layer, ordered shallow to deep.

    layer_index is the 0-based position within the analyzed list; it is the
    identifier the transition locator reports.
    """
    acts.validate()
    profiles = []
    for i, batch in enumerate(acts.layers):
        cs = class_stats(batch)
        profiles.append(LayerRadiusProfile(
            layer_index=i,
            layer_name=batch.layer_name,
            d=cs.d,
            r2=cs.r2_class_avg,
            r2_norm=normalized_radius(cs.r2_class_avg, cs.d),
        ))
    return profiles
