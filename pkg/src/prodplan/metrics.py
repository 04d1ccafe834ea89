"""KPIs, Pareto filtering and the 2-D hypervolume indicator.

Both KPIs are mapped to "larger is better" for the hypervolume: the filling
ratio as is, lead time as the utility ``1 - lead_time / L_max``.  The
reference point is the origin, so hypervolumes lie in ``[0, 1]``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .instance import ProblemInstance
from .qubo import Allocation
from .scheduler import Schedule


@dataclass(frozen=True)
class KpiPoint:
    filling_ratio: float
    lead_time: float
    provenance: str = ""

    def coords(self) -> tuple[float, float]:
        return self.filling_ratio, self.lead_time

    def dominates(self, other: "KpiPoint") -> bool:
        return (self.filling_ratio >= other.filling_ratio and self.lead_time <= other.lead_time
                and (self.filling_ratio > other.filling_ratio or self.lead_time < other.lead_time))


def kpis(allocation: Allocation, schedule: Schedule, instance: ProblemInstance,
         fill_aggregate: str = "mean", lead_aggregate: str = "sum", provenance: str = "") -> KpiPoint:
    """Filling ratio over used batches and lead time over tasks."""
    if not allocation.batches:
        raise ValueError("allocation has no batches")
    ratios, leads = [], []
    for b in allocation.batches:
        cap = instance.resources[b.resource].capacity
        # exact ratios: equal fills from different batchings must compare equal
        ratios.append(Fraction(allocation.load(b, instance), cap))
        z = schedule.completion[(b.cluster, b.resource, b.copy)]
        leads.extend(abs(z - instance.task(b.cluster, i).due_date) for i in b.members)
    if fill_aggregate == "mean":
        fill = float(sum(ratios) / len(ratios))
    elif fill_aggregate == "min":
        fill = float(min(ratios))
    else:
        raise ValueError(f"unknown fill aggregate {fill_aggregate!r}")
    if lead_aggregate == "sum":
        lead = float(sum(leads))
    elif lead_aggregate == "mean":
        lead = sum(leads) / len(leads)
    else:
        raise ValueError(f"unknown lead aggregate {lead_aggregate!r}")
    return KpiPoint(fill, lead, provenance)


def pareto_filter(points: Iterable[KpiPoint]) -> list[KpiPoint]:
    """Non-dominated points, filling ratio descending; exact duplicates collapse to the first."""
    unique: dict[tuple[float, float], KpiPoint] = {}
    for p in points:
        unique.setdefault(p.coords(), p)
    ordered = sorted(unique.values(), key=lambda p: (-p.filling_ratio, p.lead_time))
    front: list[KpiPoint] = []
    best_lead = math.inf
    for p in ordered:
        # ties in filling ratio: the first (smallest lead) dominates the rest
        if p.lead_time < best_lead:
            front.append(p)
            best_lead = p.lead_time
    return front


def utility(lead_time: float, l_max: float) -> float:
    if l_max == 0:
        if lead_time > 0:
            raise ValueError("L_max = 0 with a positive lead time")
        return 1.0
    if lead_time > l_max * (1 + 1e-12):
        raise ValueError(f"lead time {lead_time} exceeds L_max {l_max}")
    return 1.0 - lead_time / l_max


def hypervolume(front: Sequence[KpiPoint], l_max: float) -> float:
    """Area dominated by ``front`` in (filling ratio, utility) space above the origin."""
    if not front:
        return 0.0
    pts = sorted(((p.filling_ratio, utility(p.lead_time, l_max)) for p in front), key=lambda t: (-t[0], -t[1]))
    area, top = 0.0, 0.0
    for f, u in pts:
        if u > top:
            area += f * (u - top)
            top = u
    return area


@dataclass
class FrontComparison:
    l_max: float
    baseline: str
    fronts: dict[str, list[KpiPoint]]
    hypervolumes: dict[str, float]
    improvement: dict[str, float | None] = field(default_factory=dict)

    def improvement_percent(self, method: str) -> float | None:
        rate = self.improvement.get(method)
        return None if rate is None else 100.0 * rate


def improvement_rate(hv: float, hv_baseline: float) -> float | None:
    """``hv / hv_baseline - 1``; ``None`` when the baseline hypervolume is zero."""
    if hv_baseline <= 0:
        return None
    return hv / hv_baseline - 1.0


def compare_fronts(points_by_method: Mapping[str, Sequence[KpiPoint]], baseline: str) -> FrontComparison:
    """Hypervolumes of every method under one shared ``L_max``."""
    if len(points_by_method) < 2:
        raise ValueError("need at least two methods to compare")
    if baseline not in points_by_method:
        raise ValueError(f"baseline {baseline!r} not among {sorted(points_by_method)}")
    l_max = max((p.lead_time for pts in points_by_method.values() for p in pts), default=0.0)
    fronts = {m: pareto_filter(pts) for m, pts in points_by_method.items()}
    hvs = {m: hypervolume(f, l_max) for m, f in fronts.items()}
    rates = {m: improvement_rate(hvs[m], hvs[baseline]) for m in fronts if m != baseline}
    return FrontComparison(l_max, baseline, fronts, hvs, rates)
