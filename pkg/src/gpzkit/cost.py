"""Deployment cost accounting for a split MLP: FLOPs, payload, energy.

FLOP counts use the multiply–accumulate convention (1 MAC = 2 FLOPs) over
weight matrices only; bias adds and activations are excluded as negligible.
Payload size is the raw byte count of the split-layer state at a given
numeric precision.  Energy-derived figures are computed from a supplied
measurement (total joules, iteration count, wall-clock window) rather than
measured in-process: E_inf = E/N, P_avg = E/T, EDP = E·T, ED²P = E·T².

GFLOPs/W deliberately uses the per-inference FLOP count spread over the
measurement window — ((FLOPs/T)/10⁹)/P_avg — the only reading under which
the published reference row is self-consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .micronet import MlpModel, count_params

__all__ = [
    "PRECISION_BYTES",
    "EnergyMetrics",
    "CostReport",
    "tx_bytes",
    "flops",
    "act_peak_bytes",
    "energy_metrics",
    "parse_measurement",
    "cost_report",
]

PRECISION_BYTES = {"fp32": 4, "fp16": 2, "int8": 1}


def tx_bytes(per_sample_shape: Sequence[int], precision: str) -> int:
    """Raw payload bytes for one sample's state: prod(shape) × element size."""
    if precision not in PRECISION_BYTES:
        raise ValueError(f"unknown precision {precision!r}; expected one of {sorted(PRECISION_BYTES)}")
    dims = [int(x) for x in per_sample_shape]
    if not dims:
        raise ValueError("shape must be nonempty")
    if any(d <= 0 for d in dims):
        raise ValueError(f"shape {tuple(dims)} has a zero or negative extent")
    return math.prod(dims) * PRECISION_BYTES[precision]


def flops(model: MlpModel, split_index: int) -> int:
    """FLOPs for one inference through the first `split_index` layers (2·in·out each)."""
    if not 0 <= split_index <= model.num_layers:
        raise ValueError(f"split_index {split_index} out of range [0, {model.num_layers}]")
    return sum(2 * layer.in_dim * layer.out_dim for layer in model.layers[:split_index])


def act_peak_bytes(model: MlpModel, split_index: int) -> int:
    """Peak activation footprint on the edge: widest produced state × 4 bytes."""
    if not 0 <= split_index <= model.num_layers:
        raise ValueError(f"split_index {split_index} out of range [0, {model.num_layers}]")
    if split_index == 0:
        return 0
    return 4 * max(layer.out_dim for layer in model.layers[:split_index])


@dataclass(frozen=True)
class EnergyMetrics:
    """Derived energy/latency figures for one measurement window."""

    e_total_j: float
    n_iters: int
    t_window_s: float
    flops_per_inf: int
    e_inf_j: float
    p_avg_w: float
    gflops_per_watt: float
    edp_js: float
    ed2p_js2: float

    def to_dict(self) -> dict:
        return {
            "e_total_j": self.e_total_j,
            "n_iters": self.n_iters,
            "t_window_s": self.t_window_s,
            "flops_per_inf": self.flops_per_inf,
            "e_inf_j": self.e_inf_j,
            "p_avg_w": self.p_avg_w,
            "gflops_per_watt": self.gflops_per_watt,
            "edp_js": self.edp_js,
            "ed2p_js2": self.ed2p_js2,
        }


def energy_metrics(e_total: float, n_iters: int, t_window: float,
                   flops_per_inf: int) -> EnergyMetrics:
    """Derive E_inf, P_avg, GFLOPs/W, EDP, ED²P from one measurement."""
    if not (math.isfinite(e_total) and e_total > 0):
        raise ValueError("e_total must be a positive number of joules")
    if n_iters <= 0:
        raise ValueError("n_iters must be positive")
    if not (math.isfinite(t_window) and t_window > 0):
        raise ValueError("t_window must be a positive number of seconds")
    if flops_per_inf <= 0:
        raise ValueError("flops_per_inf must be positive")
    p_avg = e_total / t_window
    out = EnergyMetrics(
        e_total_j=float(e_total),
        n_iters=int(n_iters),
        t_window_s=float(t_window),
        flops_per_inf=int(flops_per_inf),
        e_inf_j=e_total / n_iters,
        p_avg_w=p_avg,
        gflops_per_watt=(flops_per_inf / t_window) / 1e9 / p_avg,
        edp_js=e_total * t_window,
        ed2p_js2=e_total * t_window * t_window,
    )
    # The defining identities must survive the arithmetic bit-for-bit-ish.
    assert math.isclose(out.e_inf_j * out.n_iters, out.e_total_j, rel_tol=1e-12)
    assert math.isclose(out.edp_js / out.e_total_j, out.t_window_s, rel_tol=1e-12)
    assert math.isclose(out.ed2p_js2 / out.edp_js, out.t_window_s, rel_tol=1e-12)
    return out


def parse_measurement(obj: Mapping) -> tuple[float, int, float]:
    """Validate a measurement mapping {e_total_j, n_iters, t_window_s}."""
    missing = [k for k in ("e_total_j", "n_iters", "t_window_s") if k not in obj]
    if missing:
        raise ValueError(f"measurement is missing field(s): {', '.join(missing)}")
    try:
        e_total = float(obj["e_total_j"])
        n_iters = int(obj["n_iters"])
        t_window = float(obj["t_window_s"])
    except (TypeError, ValueError) as exc:
        raise ValueError(f"measurement fields must be numeric: {exc}") from None
    if not (math.isfinite(e_total) and e_total > 0):
        raise ValueError("measurement field e_total_j must be positive")
    if n_iters <= 0:
        raise ValueError("measurement field n_iters must be positive")
    if not (math.isfinite(t_window) and t_window > 0):
        raise ValueError("measurement field t_window_s must be positive")
    return e_total, n_iters, t_window


@dataclass
class CostReport:
    """Structural and (optional) energy cost summary for one split."""

    split_index: int
    edge_flops: int
    total_flops: int
    tx_shape: tuple[int, ...]
    tx: dict[str, int]
    edge_params: int
    total_params: int
    edge_share: float
    act_peak: int
    energy: EnergyMetrics | None = None

    def to_dict(self) -> dict:
        return {
            "split_index": self.split_index,
            "edge_flops": self.edge_flops,
            "total_flops": self.total_flops,
            "tx_shape": list(self.tx_shape),
            "tx_bytes": dict(self.tx),
            "edge_params": self.edge_params,
            "total_params": self.total_params,
            "edge_share": self.edge_share,
            "act_peak_bytes": self.act_peak,
            "energy": self.energy.to_dict() if self.energy is not None else None,
        }


def cost_report(model: MlpModel, split_index: int, precisions: Sequence[str],
                measurement: Mapping | None = None) -> CostReport:
    """Assemble the full cost picture for one model and split.

    Without a measurement the energy block is null; with one, the edge
    FLOP count per inference feeds the throughput term.
    """
    if not precisions:
        raise ValueError("need at least one precision")
    edge_flops = flops(model, split_index)
    width = model.state_dims[split_index]
    shape = (width,)
    edge_params, total_params, edge_share = count_params(model, split_index)
    energy = None
    if measurement is not None:
        e_total, n_iters, t_window = parse_measurement(measurement)
        flops_for_energy = edge_flops if edge_flops > 0 else flops(model, model.num_layers)
        energy = energy_metrics(e_total, n_iters, t_window, flops_for_energy)
    return CostReport(
        split_index=split_index,
        edge_flops=edge_flops,
        total_flops=flops(model, model.num_layers),
        tx_shape=shape,
        tx={p: tx_bytes(shape, p) for p in dict.fromkeys(precisions)},
        edge_params=edge_params,
        total_params=total_params,
        edge_share=edge_share,
        act_peak=act_peak_bytes(model, split_index),
        energy=energy,
    )
