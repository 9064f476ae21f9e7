"""Transition-zone location from dimension-normalized radius profiles.

The locator scans the percentage drop of R²/d between consecutive analyzed
layers, takes the largest drop as the transition peak l_TP and the largest
drop strictly before it as the transition start l_TS.  If every layer
between the two has an absolute drop below the threshold τ, the transition
is localized at l_TP; otherwise the zone spans l_TS..l_TP.  A stability
protocol compares reports across evaluation reruns (zone agreement and mean
pairwise Jaccard overlap).
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

__all__ = ["LayerRadiusProfile", "GpzReport", "drop_percentages", "locate",
           "stability_check", "DEFAULT_TAU"]

DEFAULT_TAU = 0.20


@dataclass
class LayerRadiusProfile:
    layer_index: int  # 0-based position in the analyzed layer list
    layer_name: str
    d: int
    r2: float
    r2_norm: float
    drop_pct: float | None = None  # vs previous layer; None for the first

    def validate(self) -> None:
        if self.d < 1:
            raise ValueError(f"{self.layer_name!r}: dimension must be >= 1")
        if self.r2 < 0:
            raise ValueError(f"{self.layer_name!r}: radius must be nonnegative")
        expected = self.r2 / self.d
        scale = max(abs(expected), 1.0)
        if abs(self.r2_norm - expected) > 1e-9 * scale:
            raise ValueError(f"{self.layer_name!r}: r2_norm is not r2/d")


@dataclass
class GpzReport:
    l_tp: int
    l_ts: int
    zone: list[int]  # layer positions from l_TS to l_TP (just [l_TP] when localized)
    localized: bool
    no_precursor: bool
    tau: float
    layer_names: list[str]
    drops: list[dict] = field(default_factory=list)  # {"from", "to", "pct" (None if undefined)}

    def zone_names(self) -> list[str]:
        return [self.layer_names[i] for i in self.zone]

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "l_TS": self.l_ts,
            "l_TP": self.l_tp,
            "l_TS_name": self.layer_names[self.l_ts],
            "l_TP_name": self.layer_names[self.l_tp],
            "zone": list(self.zone),
            "zone_names": self.zone_names(),
            "localized": self.localized,
            "no_precursor": self.no_precursor,
            "layers": list(self.layer_names),
            "drops": [dict(d) for d in self.drops],
        }


def drop_percentages(profiles: list[LayerRadiusProfile]) -> list[float | None]:
    """Signed percentage drop of r2_norm between consecutive profiles.

    Entry i covers the pair (profiles[i], profiles[i+1]); a nonpositive
    previous radius makes the drop undefined (None), never infinite.
    """
    if len(profiles) < 2:
        raise ValueError("need at least 2 profiles to compute drops")
    for p in profiles:
        p.validate()
    drops: list[float | None] = []
    for prev, cur in itertools.pairwise(profiles):
        if prev.r2_norm <= 0:
            drops.append(None)
        else:
            drops.append((prev.r2_norm - cur.r2_norm) / prev.r2_norm * 100.0)
    return drops


def locate(profiles: list[LayerRadiusProfile], tau: float = DEFAULT_TAU) -> GpzReport:
    """Locate the transition zone in an ordered (shallow→deep) profile list.

    Argmax ties break toward the shallower layer.  When no drop exists
    before the peak, l_TS is set to l_TP and the report is flagged
    no_precursor.  Drops with an undefined previous radius are excluded
    from the argmax.
    """
    if len(profiles) < 3:
        raise ValueError("need at least 3 profiles to locate a transition")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    drops = drop_percentages(profiles)
    defined = [i for i, v in enumerate(drops) if v is not None]
    if not defined:
        raise ValueError("all drops are undefined (zero radii throughout)")

    def argmax(pairs: list[int]) -> int:
        best = pairs[0]
        for i in pairs[1:]:
            if drops[i] > drops[best]:  # strict: ties keep the shallower pair
                best = i
        return best

    tp_pair = argmax(defined)
    l_tp = tp_pair + 1  # drop i lands on profile position i+1

    before = [i for i in defined if i < tp_pair]
    if before:
        l_ts = argmax(before) + 1
        no_precursor = False
    else:
        l_ts = l_tp
        no_precursor = True

    intermediate = [i for i in range(l_ts + 1, l_tp)]  # strictly between, as drop targets
    localized = all(
        drops[i - 1] is not None and abs(drops[i - 1]) < tau * 100.0
        for i in intermediate
    )
    zone = [l_tp] if localized else list(range(l_ts, l_tp + 1))

    names = [p.layer_name for p in profiles]
    drop_entries = [
        {"from": names[i], "to": names[i + 1], "pct": drops[i]}
        for i in range(len(drops))
    ]
    return GpzReport(l_tp=l_tp, l_ts=l_ts, zone=zone, localized=localized,
                     no_precursor=no_precursor, tau=float(tau),
                     layer_names=names, drops=drop_entries)


def stability_check(reports: list[GpzReport]) -> tuple[float, float]:
    """(zone agreement fraction, mean pairwise Jaccard) across reruns.

    Agreement is the fraction of reports whose zone equals the modal zone
    (ties between equally common zones resolve to the lexicographically
    smallest, so the result is deterministic).
    """
    if len(reports) < 2:
        raise ValueError("need at least 2 reports")
    layer_lists = {tuple(r.layer_names) for r in reports}
    if len(layer_lists) != 1:
        raise ValueError("reports cover different layer lists")

    zones = [tuple(r.zone) for r in reports]
    counts = Counter(zones)
    top = max(counts.values())
    modal = min(z for z, c in counts.items() if c == top)
    agreement = sum(1 for z in zones if z == modal) / len(zones)

    sets = [set(z) for z in zones]
    jaccards = [
        len(a & b) / len(a | b)
        for a, b in itertools.combinations(sets, 2)
    ]
    return float(agreement), float(sum(jaccards) / len(jaccards))
