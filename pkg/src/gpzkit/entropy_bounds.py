"""Entropy upper-bound surrogates and quantization bridge estimators.

Two Gaussian max-entropy surrogates cap the differential entropy of a
layer's representations: a feature-level one from the pooled per-dimension
variance, (d/2)·ln(2πe·σ²), and a decision-level one from the worst class
radius, max_c (D/2)·ln(2πe·R_c²/D) + ln K.  Their difference (the surrogate
gap) decomposes into variance, radius, dimension and class-count terms.

The continuous and discrete pictures are connected by uniform quantization
at cell width Δ: the Shannon entropy of the binned variable equals the
differential entropy plus m·ln(1/Δ) plus a nonnegative mismatch that decays
as Δ shrinks.  κ_Δ(m) = m·ln(1/Δ) is reported as the leading finite-precision
correction; the mismatch is estimated separately by `bridge_residual`.

Degenerate (zero-variance) inputs yield signed-infinity sentinels rather
than exceptions, so layer sweeps always complete.  All values are in nats;
reports carry a display-only bits conversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_DELTA",
    "feat_surrogate",
    "class_surrogate",
    "dec_surrogate",
    "surrogate_gap",
    "surrogate_gap_terms",
    "kappa_uniform",
    "quantized_entropy",
    "gaussian_entropy",
    "bridge_residual",
    "hx_given_z_lower",
    "empirical_label_entropy",
    "LayerBounds",
]

DEFAULT_DELTA = 2.0 ** -10
_LN_2PIE = math.log(2.0 * math.pi * math.e)
_MAX_QUANT_DIM = 4  # cell counting explodes in higher dimension


def feat_surrogate(sigma2: float, d: int) -> float:
    """Feature-level cap (d/2)·ln(2πe·σ²); −inf sentinel for σ² ≤ 0."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if math.isnan(sigma2):
        raise ValueError("sigma2 must not be NaN")
    if sigma2 <= 0:
        return -math.inf
    return 0.5 * d * (_LN_2PIE + math.log(sigma2))


def class_surrogate(r2_c: float, big_d: int) -> float:
    """Per-class decision-level cap (D/2)·ln(2πe·R_c²/D); −inf for R_c² ≤ 0."""
    if big_d < 1:
        raise ValueError("dimension must be >= 1")
    if math.isnan(r2_c):
        raise ValueError("r2 must not be NaN")
    if r2_c <= 0:
        return -math.inf
    return 0.5 * big_d * (_LN_2PIE + math.log(r2_c / big_d))


def dec_surrogate(class_surrogates: Sequence[float], k: int) -> float:
    """Decision-level cap: worst class surrogate plus ln K."""
    if not len(class_surrogates):
        raise ValueError("need at least one class surrogate")
    if k < 1:
        raise ValueError("class count must be >= 1")
    return max(class_surrogates) + math.log(k)


def surrogate_gap(h_feat: float, h_dec: float) -> float:
    """Difference of finite surrogates (feature minus decision level)."""
    if not (math.isfinite(h_feat) and math.isfinite(h_dec)):
        raise ValueError("surrogate gap requires finite surrogates")
    return h_feat - h_dec


def surrogate_gap_terms(sigma2: float, d: int, r2_max: float, big_d: int, k: int) -> dict:
    """Expanded decomposition of the gap; the four terms re-sum to it exactly.

    var_term + radius_term + dim_term + label_term
      = (d/2)lnσ² − (D/2)ln(R²/D) + ((d−D)/2)ln(2πe) − ln K
      = feat_surrogate(σ², d) − dec_surrogate([class_surrogate(R², D)], K).
    """
    if sigma2 <= 0 or r2_max <= 0:
        raise ValueError("decomposition requires positive variance and radius")
    return {
        "var_term": 0.5 * d * math.log(sigma2),
        "radius_term": -0.5 * big_d * math.log(r2_max / big_d),
        "dim_term": 0.5 * (d - big_d) * _LN_2PIE,
        "label_term": -math.log(k),
    }


def kappa_uniform(m: int, delta: float) -> float:
    """Leading finite-precision correction m·ln(1/Δ) for uniform cells."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return -m * math.log(delta)


def quantized_entropy(samples: np.ndarray, delta: float) -> float:
    """Plug-in Shannon entropy of samples binned on a uniform grid.

    Each coordinate is binned by floor(x/Δ); cells are counted exactly.
    Limited to dimension ≤ 4 by policy — the occupied-cell count (and the
    estimator's bias) grows too fast beyond that.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("samples must be a nonempty (N, m) array")
    m = x.shape[1]
    if m > _MAX_QUANT_DIM:
        raise ValueError(f"dimension {m} exceeds the policy limit {_MAX_QUANT_DIM}")
    if not np.isfinite(x).all():
        raise ValueError("samples contain non-finite values")
    cells = np.floor(x / delta).astype(np.int64)
    if m == 1:
        _, counts = np.unique(cells[:, 0], return_counts=True)
    else:
        _, counts = np.unique(cells, axis=0, return_counts=True)
    p = counts / cells.shape[0]
    return float(-(p * np.log(p)).sum())


def gaussian_entropy(cov_trace_or_diag, d: int) -> float:
    """Closed-form Gaussian differential entropy for a diagonal covariance.

    A sequence is taken as the per-dimension variances; a scalar is taken
    as the covariance trace of an isotropic Gaussian (σᵢ² = trace/d).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if np.isscalar(cov_trace_or_diag):
        trace = float(cov_trace_or_diag)
        if not trace > 0:
            raise ValueError("variance must be positive")
        variances = np.full(d, trace / d)
    else:
        variances = np.asarray(cov_trace_or_diag, dtype=np.float64)
        if variances.shape != (d,):
            raise ValueError(f"expected {d} per-dimension variances")
        if not (variances > 0).all():
            raise ValueError("variance must be positive")
    return float(0.5 * (_LN_2PIE + np.log(variances)).sum())


def bridge_residual(samples: np.ndarray, delta: float, h_reference: float) -> float:
    """Empirical quantization mismatch: H_quantized − h_ref − m·ln(1/Δ).

    Estimates the (nonnegative, Δ→0 vanishing) divergence between the
    true density and its cell-averaged version; small negative values are
    plug-in estimator noise.
    """
    if not math.isfinite(h_reference):
        raise ValueError("reference differential entropy must be finite")
    x = np.asarray(samples, dtype=np.float64)
    m = 1 if x.ndim == 1 else x.shape[1]
    return quantized_entropy(x, delta) - h_reference - kappa_uniform(m, delta)


def hx_given_z_lower(hx: float, kind: str, surrogate: float, kappa: float,
                     h_label: float | None = None) -> float:
    """Lower bound on the conditional input entropy given a representation.

    feat: hx − surrogate − κ, with surrogate = (d/2)ln(2πe·σ²_feat).
    dec:  hx − surrogate − H(Y) − κ, with surrogate = max-over-classes
          (D/2)ln(2πe·R_c²/D).
    A −inf surrogate (degenerate layer) yields the +inf sentinel: a
    collapsed representation reveals nothing about the input.
    """
    if hx is None or not math.isfinite(hx):
        raise ValueError("hx estimate is required and must be finite")
    if not math.isfinite(kappa):
        raise ValueError("kappa must be finite")
    if kind == "feat":
        sub = surrogate + kappa
    elif kind == "dec":
        if h_label is None or not math.isfinite(h_label):
            raise ValueError("decision-level bound requires a finite label entropy")
        sub = surrogate + h_label + kappa
    else:
        raise ValueError(f"kind must be 'feat' or 'dec', got {kind!r}")
    if sub == -math.inf:
        return math.inf
    return hx - sub


def empirical_label_entropy(labels: np.ndarray, k: int) -> float:
    """Plug-in Shannon entropy of the empirical label distribution."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("labels must be nonempty")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must lie in [0, K)")
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    p = counts[counts > 0] / labels.size
    return float(-(p * np.log(p)).sum())


@dataclass
class LayerBounds:
    """Per-layer entropy-bound summary (all entropic values in nats)."""

    layer_index: int
    layer_name: str
    d: int
    h_feat: float
    class_surrogates: list[dict]  # [{"c": label, "value": surrogate}]
    h_dec: float
    gap: float | None  # None when a surrogate is infinite
    gap_terms: dict | None
    ln_k: float
    h_label: float
    kappa: float
    delta: float
    lb_subtrahend_feat: float
    lb_subtrahend_dec: float
    hx_estimate: float | None = None
    lb_feat: float | None = None
    lb_dec: float | None = None

    def to_dict(self) -> dict:
        return {
            "layer": self.layer_name,
            "layer_index": self.layer_index,
            "d": self.d,
            "h_feat": self.h_feat,
            "class_surrogates": [dict(e) for e in self.class_surrogates],
            "h_dec": self.h_dec,
            "gap": self.gap,
            "gap_terms": dict(self.gap_terms) if self.gap_terms is not None else None,
            "lnK": self.ln_k,
            "hY": self.h_label,
            "kappa": self.kappa,
            "lb_subtrahend_feat": self.lb_subtrahend_feat,
            "lb_subtrahend_dec": self.lb_subtrahend_dec,
            "lb_feat": self.lb_feat,
            "lb_dec": self.lb_dec,
            "delta": self.delta,
        }
