"""Stage runners: turn core results into the canonical JSON report payloads.

Each function here corresponds to one pipeline stage (stats, locate,
bounds, dynamics, invert, cost) and produces a plain dict ready for
`tensor_io.dumps_report`.  `run_pipeline` chains every stage from a single
master seed — per-stage seeds are split off deterministically, so any
stage can be reproduced in isolation and the whole run is byte-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cost as cost_model
from .activations import ActivationSet
from .datagen import Dataset, gaussian_mixture
from .dynamics import analyze_class
from .entropy_bounds import (
    DEFAULT_DELTA,
    LayerBounds,
    class_surrogate,
    dec_surrogate,
    empirical_label_entropy,
    feat_surrogate,
    hx_given_z_lower,
    kappa_uniform,
    quantized_entropy,
    surrogate_gap,
    surrogate_gap_terms,
)
from .gpz import DEFAULT_TAU, locate, stability_check
from .inversion import DecoderConfig, sweep_layers
from .micronet import (
    MlpModel,
    TargetScheme,
    TrainResult,
    extract,
    forward_batch,
    init_model,
    jacobian,
    softmax,
    train,
)
from .repr_stats import class_stats, layer_profiles
from .seeds import derive_seed

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "state_index",
    "stats_report",
    "gpz_report",
    "bounds_report",
    "dynamics_report",
    "inversion_report",
    "cost_report",
    "train_report",
    "stability_protocol",
    "run_pipeline",
]

_LN2 = math.log(2.0)
_BITS_KEYS = ("h_feat", "h_dec", "gap", "lnK", "hY", "kappa",
              "lb_subtrahend_feat", "lb_subtrahend_dec", "lb_feat", "lb_dec")
_MAX_HX_DIM = 4


def state_index(layer_name: str) -> int:
    """Recover the state index from a standard extractor layer name ("z3" → 3)."""
    if not (layer_name.startswith("z") and layer_name[1:].isdigit()):
        raise ValueError(f"layer name {layer_name!r} does not encode a state index")
    return int(layer_name[1:])


def stats_report(acts: ActivationSet) -> dict:
    """Per-layer class statistics: radii, pooled variance, normalized radius."""
    acts.validate()
    layers = []
    for i, batch in enumerate(acts.layers):
        cs = class_stats(batch)
        layers.append({
            "layer": batch.layer_name,
            "layer_index": i,
            "d": cs.d,
            "per_class": [{"c": e.c, "n": e.n, "r2": e.r2} for e in cs.per_class],
            "skipped_classes": list(cs.skipped),
            "sigma2_feat": cs.sigma2_feat,
            "r2_avg": cs.r2_class_avg,
            "r2_norm": cs.r2_class_avg / cs.d,
        })
    return {"b": int(acts.labels.shape[0]), "k": acts.k, "layers": layers}


def gpz_report(acts: ActivationSet, tau: float = DEFAULT_TAU) -> dict:
    """Transition-zone location over the activation set's layer order."""
    profiles = layer_profiles(acts)
    report = locate(profiles, tau)
    out = report.to_dict()
    out["profiles"] = [
        {"layer": p.layer_name, "d": p.d, "r2": p.r2, "r2_norm": p.r2_norm}
        for p in profiles
    ]
    return out


def _bits_view(entry: dict) -> dict:
    out = {}
    for key in _BITS_KEYS:
        value = entry.get(key)
        out[key] = value / _LN2 if isinstance(value, float) else value
    return out


def bounds_report(acts: ActivationSet, delta: float = DEFAULT_DELTA,
                  hx: float | None = None, bits: bool = False) -> dict:
    """Per-layer entropy surrogates, gap decomposition, and leakage bounds.

    Without an hx estimate the lb_feat/lb_dec fields are null and the
    layer-comparable subtrahends carry the ranking (hx is constant across
    layers, so it never affects layer order).
    """
    acts.validate()
    ln_k = math.log(acts.k)
    h_label = empirical_label_entropy(acts.labels, acts.k)
    layers = []
    for i, batch in enumerate(acts.layers):
        cs = class_stats(batch)
        h_feat = feat_surrogate(cs.sigma2_feat, cs.d)
        surrs = [{"c": e.c, "value": class_surrogate(e.r2, cs.d)} for e in cs.per_class]
        values = [s["value"] for s in surrs]
        max_surr = max(values)
        h_dec = dec_surrogate(values, acts.k)
        kappa = kappa_uniform(cs.d, delta)
        if math.isfinite(h_feat) and math.isfinite(h_dec):
            gap = surrogate_gap(h_feat, h_dec)
            terms = surrogate_gap_terms(cs.sigma2_feat, cs.d,
                                        max(e.r2 for e in cs.per_class), cs.d, acts.k)
            assert math.isclose(sum(terms.values()), gap, rel_tol=0, abs_tol=1e-9)
        else:
            gap = None
            terms = None
        entry = LayerBounds(
            layer_index=i,
            layer_name=batch.layer_name,
            d=cs.d,
            h_feat=h_feat,
            class_surrogates=surrs,
            h_dec=h_dec,
            gap=gap,
            gap_terms=terms,
            ln_k=ln_k,
            h_label=h_label,
            kappa=kappa,
            delta=delta,
            lb_subtrahend_feat=h_feat + kappa,
            lb_subtrahend_dec=max_surr + h_label + kappa,
            hx_estimate=hx,
            lb_feat=hx_given_z_lower(hx, "feat", h_feat, kappa) if hx is not None else None,
            lb_dec=hx_given_z_lower(hx, "dec", max_surr, kappa, h_label) if hx is not None else None,
        )
        as_dict = entry.to_dict()
        if bits:
            as_dict["bits"] = _bits_view(as_dict)
        layers.append(as_dict)
    return {"delta": delta, "k": acts.k, "lnK": ln_k, "hY": h_label,
            "hx": hx, "units": "nats", "layers": layers}


def dynamics_report(model: MlpModel, dataset: Dataset, layer: int,
                    scheme: TargetScheme, gamma: float) -> dict:
    """Per-class virtual-step analysis at one state index."""
    model.validate()
    dataset.validate()
    if not 0 <= layer < model.num_layers:
        raise ValueError(f"layer must be a state index in [0, {model.num_layers}) "
                         f"to have a logit Jacobian; got {layer}")
    if dataset.k != model.k:
        raise ValueError("dataset class count does not match the model")
    scheme = scheme.with_prior_from_labels(dataset.labels, dataset.k)
    inputs = dataset.inputs.astype(np.float64)
    states = forward_batch(model, inputs)
    z_all = states[layer]
    probs = softmax(states[-1])
    jacs = np.stack([jacobian(model, inputs[i], layer) for i in range(dataset.b)])
    classes = []
    skipped = []
    for c in range(dataset.k):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size < 2:
            skipped.append(c)
            continue
        step = analyze_class(z_all[idx], jacs[idx], probs[idx], c, scheme, gamma)
        classes.append(step.to_dict())
    if not classes:
        raise ValueError("no class has at least 2 samples")
    return {
        "layer": layer,
        "layer_name": f"z{layer}",
        "gamma": float(gamma),
        "scheme": scheme.describe(),
        "classes": classes,
        "skipped_classes": skipped,
        "max_abs_err": max(c["abs_err"] for c in classes),
    }


def inversion_report(model: MlpModel, dataset: Dataset, layers,
                     config: DecoderConfig, seed: int) -> dict:
    """Layer sweep of the reconstruction probe."""
    return sweep_layers(model, dataset, layers, config, seed).to_dict()


def cost_report(model: MlpModel, split_index: int, precisions,
                measurement=None) -> dict:
    """Structural and optional energy cost summary for one split."""
    return cost_model.cost_report(model, split_index, precisions, measurement).to_dict()


def train_report(result: TrainResult, scheme: TargetScheme, epochs: int,
                 lr: float, batch: int, seed: int) -> dict:
    return {
        "scheme": scheme.describe(),
        "epochs": epochs,
        "lr": lr,
        "batch": batch,
        "seed": seed,
        "final_loss": result.loss_curve[-1] if result.loss_curve else None,
        "final_accuracy": result.final_accuracy,
        "loss_curve": result.loss_curve,
    }


def stability_protocol(model: MlpModel, k: int, per_class: int, dim: int,
                       spread: float, eval_seeds, tau: float = DEFAULT_TAU) -> dict:
    """Re-locate the zone on fresh evaluation batches from the same mixture.

    One fixed checkpoint, several evaluation seeds: agreement is the
    fraction of runs matching the modal zone, plus the mean pairwise
    Jaccard overlap of the zones.
    """
    eval_seeds = [int(s) for s in eval_seeds]
    if len(eval_seeds) < 2:
        raise ValueError("stability needs at least two evaluation seeds")
    reports = []
    for s in eval_seeds:
        ds = gaussian_mixture(k, per_class, dim, spread, seed=s)
        acts = extract(model, ds, "all")
        reports.append(locate(layer_profiles(acts), tau))
    agreement, jaccard = stability_check(reports)
    return {
        "eval_seeds": eval_seeds,
        "tau": tau,
        "agreement": agreement,
        "mean_pairwise_jaccard": jaccard,
        "zones": [list(r.zone) for r in reports],
        "zone_names": [r.zone_names() for r in reports],
        "l_TP": [r.l_tp for r in reports],
    }


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the end-to-end run; defaults are the standard desk pipeline."""

    seed: int = 0
    k: int = 4
    per_class: int = 250
    dim: int = 16
    spread: float = 0.05
    arch: tuple[int, ...] = (32, 32, 16, 8)
    scheme: str = "onehot"
    epochs: int = 200
    lr: float = 0.01
    batch: int = 32
    tau: float = DEFAULT_TAU
    delta: float = DEFAULT_DELTA
    gamma: float = 0.01
    dyn_layer: int | None = None  # state index; default: located peak (clamped off logits)
    split: int | None = None  # cost split; default: located peak state
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    precisions: tuple[str, ...] = ("fp32", "fp16", "int8")
    stability_evals: int = 3
    measurement: dict | None = None

    def parsed_scheme(self) -> TargetScheme:
        return TargetScheme.parse(self.scheme)


@dataclass
class PipelineResult:
    """Everything one pipeline run produces, in memory."""

    config: PipelineConfig
    dataset_bytes: bytes
    model_bytes: bytes
    acts_bytes: bytes
    reports: dict[str, dict]


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Chain data → train → dump → stats → locate → bounds → dynamics →
    invert → cost → stability from one master seed.

    Every stage draws its seed by splitting the master, so reruns are
    byte-identical and single stages can be replayed independently.
    """
    from . import tensor_io  # local import: tensor_io ↔ reports stay decoupled

    scheme = cfg.parsed_scheme()
    dataset = gaussian_mixture(cfg.k, cfg.per_class, cfg.dim, cfg.spread,
                               seed=derive_seed(cfg.seed, "data"))
    model0 = init_model([cfg.dim, *cfg.arch], cfg.k, seed=derive_seed(cfg.seed, "init"))
    result = train(model0, dataset, scheme, epochs=cfg.epochs, lr=cfg.lr,
                   batch=cfg.batch, seed=derive_seed(cfg.seed, "train"))
    model = result.model
    acts = extract(model, dataset, "all")

    reports: dict[str, dict] = {}
    reports["train"] = train_report(result, scheme, cfg.epochs, cfg.lr, cfg.batch, cfg.seed)
    reports["stats"] = stats_report(acts)
    reports["gpz"] = gpz_report(acts, cfg.tau)
    hx = quantized_entropy(dataset.inputs, cfg.delta) if cfg.dim <= _MAX_HX_DIM else None
    reports["bounds"] = bounds_report(acts, cfg.delta, hx=hx)

    peak_state = state_index(reports["gpz"]["l_TP_name"])
    dyn_layer = cfg.dyn_layer if cfg.dyn_layer is not None else min(peak_state, model.num_layers - 1)
    reports["dynamics"] = dynamics_report(model, dataset, dyn_layer, scheme, cfg.gamma)

    reports["inversion"] = inversion_report(model, dataset, "all", cfg.decoder,
                                            seed=derive_seed(cfg.seed, "invert"))
    split = cfg.split if cfg.split is not None else peak_state
    reports["cost"] = cost_report(model, split, cfg.precisions, cfg.measurement)
    reports["stability"] = stability_protocol(
        model, cfg.k, cfg.per_class, cfg.dim, cfg.spread,
        eval_seeds=[derive_seed(cfg.seed, "eval", i) for i in range(cfg.stability_evals)],
        tau=cfg.tau)

    return PipelineResult(
        config=cfg,
        dataset_bytes=tensor_io.dumps_gpzd(dataset),
        model_bytes=tensor_io.dumps_gpzm(model),
        acts_bytes=tensor_io.dumps_gpza(acts),
        reports=reports,
    )
