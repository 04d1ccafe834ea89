"""Solution pools shared by the separation pipeline and the monolithic baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .instance import ProblemInstance
from .metrics import KpiPoint, pareto_filter
from .qubo import Allocation, Batch
from .scheduler import Schedule


@dataclass(frozen=True)
class PoolEntry:
    allocation: Allocation
    schedule: Schedule
    kpi: KpiPoint
    provenance: str

    def key(self) -> tuple:
        return self.allocation.key(), tuple(sorted(self.schedule.completion.items()))


@dataclass
class SolutionPool:
    """Deduplicated (allocation, completion times) solutions with their KPIs."""

    method: str
    entries: list[PoolEntry] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    _keys: set = field(default_factory=set, repr=False)

    def add(self, entry: PoolEntry) -> bool:
        k = entry.key()
        if k in self._keys:
            return False
        self._keys.add(k)
        self.entries.append(entry)
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[PoolEntry]:
        return iter(self.entries)

    def points(self) -> list[KpiPoint]:
        return [e.kpi for e in self.entries]

    def front(self) -> list[KpiPoint]:
        return pareto_filter(self.points())

    def sort(self) -> None:
        """Canonical order: by KPI, then by the solution key."""
        self.entries.sort(key=lambda e: (-e.kpi.filling_ratio, e.kpi.lead_time, e.key()))


def entry_to_dict(entry: PoolEntry, instance: ProblemInstance | None = None) -> dict:
    batches = []
    for b in entry.allocation.batches:
        item = {"cluster": b.cluster, "resource": b.resource, "copy": b.copy,
                "members": list(b.members),
                "completion_time": entry.schedule.completion[(b.cluster, b.resource, b.copy)]}
        if instance is not None:
            item["task_ids"] = [instance.task(b.cluster, i).task_id for i in b.members]
        batches.append(item)
    return {"provenance": entry.provenance,
            "filling_ratio": entry.kpi.filling_ratio,
            "lead_time": entry.kpi.lead_time,
            "schedule_objective": entry.schedule.objective_value,
            "batches": batches}


def pool_to_dict(pool: SolutionPool, instance: ProblemInstance | None = None) -> dict:
    return {"method": pool.method,
            "diagnostics": pool.diagnostics,
            "entries": [entry_to_dict(e, instance) for e in pool.entries]}


def pool_from_dict(doc: dict) -> SolutionPool:
    pool = SolutionPool(doc["method"], diagnostics=doc.get("diagnostics", {}))
    for item in doc["entries"]:
        batches = tuple(Batch(b["cluster"], b["resource"], b["copy"], tuple(b["members"]))
                        for b in item["batches"])
        completion = {(b["cluster"], b["resource"], b["copy"]): float(b["completion_time"])
                      for b in item["batches"]}
        orders: dict[int, tuple] = {}
        for key in sorted(completion, key=lambda k: (completion[k], k)):
            orders[key[1]] = orders.get(key[1], ()) + (key,)
        schedule = Schedule(completion, orders, float(item["schedule_objective"]))
        kpi = KpiPoint(float(item["filling_ratio"]), float(item["lead_time"]), item["provenance"])
        pool.add(PoolEntry(Allocation(batches), schedule, kpi, item["provenance"]))
    return pool


def save_pool(pool: SolutionPool, path: str | Path, instance: ProblemInstance | None = None,
              extra: dict | None = None) -> None:
    doc = pool_to_dict(pool, instance)
    if extra:
        doc = {**extra, **doc}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def load_pool(path: str | Path) -> SolutionPool:
    return pool_from_dict(json.loads(Path(path).read_text()))
