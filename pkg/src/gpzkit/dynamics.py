"""First-order radius dynamics under one virtual SGD step.

For a class batch with residuals r_i = z_i − μ_c and per-sample logit
Jacobians J_i, the T-terms T_k,i = r_iᵀ(J_iᵀe_k) measure how each logit
direction pulls a sample relative to its class center.  Weighting them by
the softmax/target mismatch and summing gives a closed-form first-order
prediction of the change in the intra-class mean-squared radius R_c²; a
brute-force oracle applies the step z_i⁺ = z_i − γ·g̃_i, recomputes the
center and radius exactly, and exposes the O(γ²) gap.  The gap is exactly
γ²·mean‖g̃_i − ḡ‖² (the cross term vanishes because residuals sum to zero),
so halving γ shrinks it by exactly 4×.

Also here: outward-angle statistics split by confidence regime, and the
closed-form residual/feature-gradient norm bounds (with the SVD sandwich
σ_r·‖Πv‖ ≤ ‖Jᵀv‖ ≤ σ₁·‖v‖).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .micronet import TargetScheme, make_targets

__all__ = [
    "DynamicsStep",
    "GradBoundReport",
    "t_terms",
    "t_terms_batch",
    "scheme_coefficients",
    "scheme_residuals",
    "feature_gradients",
    "delta_r2_first_order",
    "delta_r2_oracle",
    "soft_target_extra_term",
    "angles_deg",
    "angle_stats",
    "residual_norm_bounds",
    "feature_grad_bounds",
    "grad_bound_report",
    "analyze_class",
]

SVD_RELATIVE_THRESHOLD = 1e-10
ANGLE_BIN_EDGES = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0)


def t_terms(z: np.ndarray, mu: np.ndarray, jac: np.ndarray, c: int) -> tuple[float, np.ndarray]:
    """T-terms for one sample: residual inner products with logit-gradient rows.

    Returns (T_c, T_off) where T_k = (z − μ)ᵀ(Jᵀe_k) = (J(z − μ))_k; T_off
    lists the K−1 off-class terms in ascending label order.
    """
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    jac = np.asarray(jac, dtype=np.float64)
    if z.shape != mu.shape or z.ndim != 1:
        raise ValueError("z and mu must be 1-D vectors of equal length")
    if jac.ndim != 2 or jac.shape[1] != z.shape[0]:
        raise ValueError(f"jacobian shape {jac.shape} does not match d={z.shape[0]}")
    k = jac.shape[0]
    if not 0 <= c < k:
        raise ValueError(f"class {c} out of range for K={k}")
    t_all = jac @ (z - mu)
    off = np.delete(t_all, c)
    return float(t_all[c]), off


def t_terms_batch(z: np.ndarray, mu: np.ndarray, jacs: np.ndarray, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized T-terms: (N,) true-class terms and (N, K) full table."""
    z = np.asarray(z, dtype=np.float64)
    jacs = np.asarray(jacs, dtype=np.float64)
    if z.ndim != 2 or jacs.ndim != 3 or jacs.shape[0] != z.shape[0] or jacs.shape[2] != z.shape[1]:
        raise ValueError("need z (N,d) and jacobians (N,K,d)")
    r = z - np.asarray(mu, dtype=np.float64)
    t_all = np.einsum("nkd,nd->nk", jacs, r)
    return t_all[:, c].copy(), t_all


def scheme_coefficients(probs: np.ndarray, c: int, scheme: TargetScheme) -> np.ndarray:
    """Per-sample T-term weights for a target scheme, written out per scheme.

    onehot: (p_c − 1, p_k); label smoothing: (p_c − 1 + α, p_k − α/(K−1));
    prior smoothing: (p_c − 1 + α, p_k − α·π_k/(1−π_c)).  These are spelled
    out rather than derived from the target builder so the first-order
    prediction and the raw-gradient route stay independent.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probs must be (N, K)")
    k = probs.shape[1]
    if not 0 <= c < k:
        raise ValueError(f"class {c} out of range for K={k}")
    coef = probs.copy()
    if scheme.kind == "onehot":
        coef[:, c] -= 1.0
    elif scheme.kind == "label_smoothing":
        if k < 2:
            raise ValueError("label smoothing needs K >= 2")
        off = scheme.alpha / (k - 1)
        coef -= off
        coef[:, c] += off + scheme.alpha - 1.0
    elif scheme.kind == "prior_smoothing":
        if scheme.prior is None:
            raise ValueError("prior smoothing scheme carries no prior vector")
        pi = np.asarray(scheme.prior, dtype=np.float64)
        if pi.shape != (k,):
            raise ValueError(f"prior length {pi.shape} does not match K={k}")
        if pi[c] >= 1.0:
            raise ValueError("true-class prior mass must be < 1")
        rho = pi / (1.0 - pi[c])
        coef -= scheme.alpha * rho
        coef[:, c] += scheme.alpha * rho[c] + scheme.alpha - 1.0
    else:
        raise ValueError(f"unknown scheme kind {scheme.kind!r}")
    return coef


def scheme_residuals(probs: np.ndarray, c: int, scheme: TargetScheme) -> np.ndarray:
    """Residuals δ_i = p_i − q via the target builder (the independent route)."""
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[1]
    labels = np.full(probs.shape[0], c, dtype=np.uint32)
    return probs - make_targets(labels, scheme, k)


def feature_gradients(jacs: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Per-sample feature-space gradients g̃_i = J_iᵀ δ_i, shape (N, d)."""
    jacs = np.asarray(jacs, dtype=np.float64)
    residuals = np.asarray(residuals, dtype=np.float64)
    if jacs.ndim != 3 or residuals.ndim != 2 or jacs.shape[:2] != residuals.shape:
        raise ValueError("need jacobians (N,K,d) and residuals (N,K)")
    return np.einsum("nkd,nk->nd", jacs, residuals)


def delta_r2_first_order(z: np.ndarray, jacs: np.ndarray, probs: np.ndarray,
                         c: int, scheme: TargetScheme, gamma: float) -> float:
    """First-order prediction of ΔR_c²: −(2γ/N_c)·Σ_i Σ_k coef_k,i·T_k,i."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("need at least two samples in the class batch")
    if not math.isfinite(gamma):
        raise ValueError("gamma must be finite")
    n = z.shape[0]
    mu = z.mean(axis=0)
    _, t_all = t_terms_batch(z, mu, jacs, c)
    coef = scheme_coefficients(probs, c, scheme)
    if coef.shape != t_all.shape:
        raise ValueError("probs shape does not match jacobian class count")
    return float(-(2.0 * gamma / n) * (coef * t_all).sum())


def delta_r2_oracle(z: np.ndarray, gradients: np.ndarray, gamma: float,
                    recenter: bool = True) -> float:
    """Exact ΔR_c² after the virtual step z_i⁺ = z_i − γ·g̃_i.

    The class mean is recomputed from the stepped batch by default;
    recenter=False freezes it at the original mean, isolating the
    center-shift contribution (which cancels at first order).
    """
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(gradients, dtype=np.float64)
    if z.shape != g.shape or z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("need matching (N,d) batches with N >= 2")
    mu = z.mean(axis=0)
    r2 = float(((z - mu) ** 2).sum(axis=1).mean())
    z_plus = z - gamma * g
    mu_plus = z_plus.mean(axis=0) if recenter else mu
    r2_plus = float(((z_plus - mu_plus) ** 2).sum(axis=1).mean())
    return r2_plus - r2


def soft_target_extra_term(t_corr: np.ndarray, t_all: np.ndarray, c: int,
                           alpha: float, gamma: float,
                           rho: np.ndarray | None = None) -> float:
    """Extra first-order drive a smoothed target adds over one-hot.

    −(2γα/N)·Σ_i [T_c,i − Σ_{k≠c} ρ_k·T_k,i], with ρ the off-class
    redistribution (uniform 1/(K−1) when omitted).  Adding this to the
    one-hot prediction reproduces the smoothed-scheme prediction exactly.
    """
    t_corr = np.asarray(t_corr, dtype=np.float64)
    t_all = np.asarray(t_all, dtype=np.float64)
    n, k = t_all.shape
    if rho is None:
        rho = np.full(k, 1.0 / (k - 1))
        rho[c] = 0.0
    else:
        rho = np.asarray(rho, dtype=np.float64)
    redistributed = t_all @ rho
    return float(-(2.0 * gamma * alpha / n) * (t_corr - redistributed).sum())


def angles_deg(t_corr: np.ndarray, r_norms: np.ndarray, grad_dir_norms: np.ndarray) -> np.ndarray:
    """Angle between the residual and the true-logit gradient direction.

    cos θ = T_c/(‖r‖·‖Jᵀe_c‖), reported in degrees; a vanishing denominator
    (which forces T_c = 0) maps to 90°.
    """
    t_corr = np.asarray(t_corr, dtype=np.float64)
    denom = np.asarray(r_norms, dtype=np.float64) * np.asarray(grad_dir_norms, dtype=np.float64)
    cos = np.ones_like(t_corr) * 0.0
    nz = denom > 0
    cos[nz] = np.clip(t_corr[nz] / denom[nz], -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def angle_stats(t_corr: np.ndarray, p_true: np.ndarray, alpha: float,
                theta_deg: np.ndarray | None = None) -> dict:
    """Sign/angle summaries per confidence regime.

    Regimes are strict: under-confident p_c < 1−α, over-confident
    p_c > 1−α (boundary samples belong to neither).  Empty regimes are
    listed rather than reported with empty statistics.
    """
    t_corr = np.asarray(t_corr, dtype=np.float64)
    p_true = np.asarray(p_true, dtype=np.float64)
    if t_corr.shape != p_true.shape:
        raise ValueError("t_corr and p_true must align")
    out: dict = {"alpha": float(alpha), "regimes": {}, "empty_regimes": []}
    masks = {"under": p_true < 1.0 - alpha, "over": p_true > 1.0 - alpha}
    for name, mask in masks.items():
        n = int(mask.sum())
        if n == 0:
            out["empty_regimes"].append(name)
            continue
        sel = t_corr[mask]
        entry = {
            "count": n,
            "frac_tcorr_neg": float((sel < 0).mean()),
            "frac_tcorr_pos": float((sel > 0).mean()),
        }
        if theta_deg is not None:
            th = np.asarray(theta_deg, dtype=np.float64)[mask]
            entry["theta_mean_deg"] = float(th.mean())
            entry["frac_theta_gt_90"] = float((th > 90.0).mean())
        out["regimes"][name] = entry
    return out


def residual_norm_bounds(p: np.ndarray, c: int, alpha: float) -> tuple[float, float, float]:
    """Closed-form residual-norm bounds from the off-class mass ε = 1 − p_c.

    Returns (ls_lb, onehot_ub, epsilon): the smoothed residual satisfies
    ‖δ̃‖ ≥ |α−ε|·√(K/(K−1)) (a zero-sum vector with true-class component
    α−ε can be no shorter), and the one-hot residual ‖δ‖ ≤ √2·ε; both are
    equalities at K = 2.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("p must be a probability vector")
    k = p.shape[0]
    if not 0 <= c < k:
        raise ValueError(f"class {c} out of range for K={k}")
    eps = float(1.0 - p[c])
    ls_lb = abs(alpha - eps) * math.sqrt(k / (k - 1)) if k > 1 else 0.0
    onehot_ub = math.sqrt(2.0) * eps
    return ls_lb, onehot_ub, eps


def feature_grad_bounds(jac: np.ndarray, residual: np.ndarray) -> dict:
    """SVD sandwich for the feature gradient: σ_r·‖Πv‖ ≤ ‖Jᵀv‖ ≤ σ₁·‖v‖.

    σ_r is the smallest singular value above the relative cutoff
    1e−10·σ₁ and Π projects onto the column space of J (the span of the
    retained left singular vectors), making "smallest non-zero" computable
    for numerically rank-deficient J.
    """
    jac = np.asarray(jac, dtype=np.float64)
    v = np.asarray(residual, dtype=np.float64)
    if jac.ndim != 2 or v.shape != (jac.shape[0],):
        raise ValueError("need J (K,d) and a K-vector residual")
    u, s, _ = np.linalg.svd(jac, full_matrices=False)
    sigma_max = float(s[0]) if s.size else 0.0
    if sigma_max == 0.0:
        raise ValueError("all-zero matrix has no nonzero singular values")
    keep = s > SVD_RELATIVE_THRESHOLD * sigma_max
    sigma_min_nonzero = float(s[keep][-1])
    u_r = u[:, keep]
    proj = u_r @ (u_r.T @ v)
    v_norm = float(np.linalg.norm(v))
    proj_norm = float(np.linalg.norm(proj))
    return {
        "sigma_max": sigma_max,
        "sigma_min_nonzero": sigma_min_nonzero,
        "rank": int(keep.sum()),
        "proj_retention": proj_norm / v_norm if v_norm > 0 else 1.0,
        "lower": sigma_min_nonzero * proj_norm,
        "upper": sigma_max * v_norm,
        "measured": float(np.linalg.norm(jac.T @ v)),
    }


@dataclass
class GradBoundReport:
    """Joint residual-norm and feature-gradient bound check for one sample."""

    epsilon: float
    ls_residual_lb: float
    onehot_residual_ub: float
    measured_ls_residual: float
    measured_onehot_residual: float
    sigma_min_nonzero: float
    sigma_max: float
    proj_retention: float
    feature_grad_lb: float
    feature_grad_ub: float
    measured_feature_grad_ls: float
    measured_feature_grad_onehot: float

    def consistent(self, tol: float = 1e-9) -> bool:
        return (
            self.ls_residual_lb <= self.measured_ls_residual + tol
            and self.measured_onehot_residual <= self.onehot_residual_ub + tol
            and self.feature_grad_lb <= self.measured_feature_grad_ls + tol
            and self.measured_feature_grad_onehot <= self.feature_grad_ub + tol
            and -tol <= self.proj_retention <= 1.0 + tol
        )

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "ls_residual_lb": self.ls_residual_lb,
            "onehot_residual_ub": self.onehot_residual_ub,
            "measured_ls_residual": self.measured_ls_residual,
            "measured_onehot_residual": self.measured_onehot_residual,
            "sigma_min_nonzero": self.sigma_min_nonzero,
            "sigma_max": self.sigma_max,
            "proj_retention": self.proj_retention,
            "feature_grad_lb": self.feature_grad_lb,
            "feature_grad_ub": self.feature_grad_ub,
            "measured_feature_grad_ls": self.measured_feature_grad_ls,
            "measured_feature_grad_onehot": self.measured_feature_grad_onehot,
            "consistent": self.consistent(),
        }


def grad_bound_report(jac: np.ndarray, p: np.ndarray, c: int, alpha: float) -> GradBoundReport:
    """Assemble the bound report for one sample's Jacobian and probabilities.

    The smoothed residual feeds the lower-bound side (σ_r·‖Πδ̃‖ ≤ ‖Jᵀδ̃‖)
    and the one-hot residual the collapse side (‖Jᵀδ‖ ≤ σ₁·√2·ε).
    """
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[0]
    ls_lb, onehot_ub, eps = residual_norm_bounds(p, c, alpha)
    delta_ls = scheme_residuals(p[None, :], c, TargetScheme.label_smoothing(alpha))[0]
    delta_oh = scheme_residuals(p[None, :], c, TargetScheme.onehot())[0]
    fb_ls = feature_grad_bounds(jac, delta_ls)
    jac = np.asarray(jac, dtype=np.float64)
    return GradBoundReport(
        epsilon=eps,
        ls_residual_lb=ls_lb,
        onehot_residual_ub=onehot_ub,
        measured_ls_residual=float(np.linalg.norm(delta_ls)),
        measured_onehot_residual=float(np.linalg.norm(delta_oh)),
        sigma_min_nonzero=fb_ls["sigma_min_nonzero"],
        sigma_max=fb_ls["sigma_max"],
        proj_retention=fb_ls["proj_retention"],
        feature_grad_lb=fb_ls["lower"],
        feature_grad_ub=fb_ls["sigma_max"] * math.sqrt(2.0) * eps,
        measured_feature_grad_ls=fb_ls["measured"],
        measured_feature_grad_onehot=float(np.linalg.norm(jac.T @ delta_oh)),
    )


@dataclass
class DynamicsStep:
    """One class's virtual-step analysis: prediction, oracle, and geometry."""

    c: int
    gamma: float
    n: int
    scheme: str
    pred: float
    oracle: float
    t_corr: np.ndarray
    t_all: np.ndarray
    theta_deg: np.ndarray
    residual_norms: np.ndarray
    p_true: np.ndarray
    alpha: float
    bounds: dict

    @property
    def abs_err(self) -> float:
        return abs(self.pred - self.oracle)

    def to_dict(self) -> dict:
        theta_hist, _ = np.histogram(self.theta_deg, bins=ANGLE_BIN_EDGES)
        return {
            "class": self.c,
            "gamma": self.gamma,
            "n": self.n,
            "scheme": self.scheme,
            "pred": self.pred,
            "oracle": self.oracle,
            "abs_err": self.abs_err,
            "t_corr_stats": {
                "mean": float(self.t_corr.mean()),
                "min": float(self.t_corr.min()),
                "max": float(self.t_corr.max()),
                "frac_neg": float((self.t_corr < 0).mean()),
            },
            "angle_hist": {
                "bin_edges_deg": list(ANGLE_BIN_EDGES),
                "counts": [int(x) for x in theta_hist],
            },
            "angle_regimes": angle_stats(self.t_corr, self.p_true, self.alpha, self.theta_deg),
            "bounds": dict(self.bounds),
        }


def analyze_class(z: np.ndarray, jacs: np.ndarray, probs: np.ndarray, c: int,
                  scheme: TargetScheme, gamma: float) -> DynamicsStep:
    """Full per-class analysis: prediction, oracle, angles, and bound margins.

    The prediction runs through the per-scheme T-term weights; the oracle
    runs through target construction and raw feature gradients — two
    independent routes whose gap is the O(γ²) term.
    """
    z = np.asarray(z, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    pred = delta_r2_first_order(z, jacs, probs, c, scheme, gamma)
    residuals = scheme_residuals(probs, c, scheme)
    grads = feature_gradients(jacs, residuals)
    oracle = delta_r2_oracle(z, grads, gamma)
    mu = z.mean(axis=0)
    t_corr, t_all = t_terms_batch(z, mu, jacs, c)
    r_norms = np.linalg.norm(z - mu, axis=1)
    grad_dir_norms = np.linalg.norm(np.asarray(jacs, dtype=np.float64)[:, c, :], axis=1)
    theta = angles_deg(t_corr, r_norms, grad_dir_norms)
    alpha = scheme.alpha if scheme.kind != "onehot" else 0.0
    bound_alpha = alpha if scheme.kind != "onehot" else 0.1
    reports = [grad_bound_report(jacs[i], probs[i], c, bound_alpha) for i in range(z.shape[0])]
    eps = np.array([r.epsilon for r in reports])
    bounds = {
        "alpha_used": bound_alpha,
        "epsilon_mean": float(eps.mean()),
        "ls_margin_min": float(min(r.measured_ls_residual - r.ls_residual_lb for r in reports)),
        "onehot_margin_min": float(min(r.onehot_residual_ub - r.measured_onehot_residual for r in reports)),
        "feature_lb_margin_min": float(min(r.measured_feature_grad_ls - r.feature_grad_lb for r in reports)),
        "feature_ub_margin_min": float(min(r.feature_grad_ub - r.measured_feature_grad_onehot for r in reports)),
        "proj_retention_mean": float(np.mean([r.proj_retention for r in reports])),
        "all_consistent": bool(all(r.consistent() for r in reports)),
    }
    return DynamicsStep(
        c=c, gamma=float(gamma), n=int(z.shape[0]), scheme=scheme.describe(),
        pred=pred, oracle=oracle, t_corr=t_corr, t_all=t_all, theta_deg=theta,
        residual_norms=np.linalg.norm(residuals, axis=1), p_true=probs[:, c].copy(),
        alpha=alpha, bounds=bounds,
    )
