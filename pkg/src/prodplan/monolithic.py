"""Single-stage baseline: joint batching and slot assignment by branch and bound.

Tasks are branched in decreasing weight.  A task either joins an open batch
of its cluster (capacity permitting) or opens a new virtual resource at a
completion slot on the integer time grid.  For each scalarization weight
``w`` the children of a node are explored in order of the optimistic value
of ``w * (1 - fill) + (1 - w) * lead / (N * max_due)``.

Pruning (``pruning="pareto"``, the default) discards a node when a solution
already found weakly dominates the node's optimistic (fill, lead) corner.
With an unlimited budget every weight therefore recovers the exact front;
under a budget each weight contributes the incumbents its search order
reaches first.  ``pruning="scalar"`` is the plain weighted-sum
branch and bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .instance import ProblemInstance, require_valid
from .metrics import kpis
from .pool import PoolEntry, SolutionPool
from .qubo import Allocation, Batch
from .scheduler import Schedule, batch_target

# Search nodes that count as one second of budget in "work" mode.  Measured
# for this implementation on the reference machine (see README); it makes a
# budget reproducible across machines and thread counts.
NODES_PER_SECOND = 60_000

TOL = 1e-9


@dataclass(frozen=True)
class MonolithicConfig:
    time_budget: float = 0.1
    weight_grid: tuple[float, ...] = tuple(k / 10 for k in range(11))
    time_grid_step: int = 1
    master_seed: int = 0
    budget_mode: str = "work"
    pruning: str = "pareto"

    def __post_init__(self):
        if not self.time_budget > 0:
            raise ValueError("time_budget must be > 0")
        if not self.weight_grid or any(not 0 <= w <= 1 for w in self.weight_grid):
            raise ValueError("weight_grid must be non-empty with weights in [0, 1]")
        if self.time_grid_step < 1:
            raise ValueError("time_grid_step must be >= 1")
        if self.budget_mode not in ("work", "wall"):
            raise ValueError(f"budget_mode must be 'work' or 'wall', got {self.budget_mode!r}")
        if self.pruning not in ("pareto", "scalar"):
            raise ValueError(f"pruning must be 'pareto' or 'scalar', got {self.pruning!r}")


class _OutOfBudget(Exception):
    pass


@dataclass
class _Open:
    c: int
    j: int
    z: int
    load: int
    members: list[int] = field(default_factory=list)


class _Search:
    def __init__(self, instance: ProblemInstance, config: MonolithicConfig, weight: float,
                 max_nodes: int | None, deadline: float | None, pool: SolutionPool):
        self.inst = instance
        self.cfg = config
        self.w = weight
        self.max_nodes = max_nodes
        self.deadline = deadline
        self.pool = pool
        self.nodes = 0
        self.found = 0
        self.completed = False

        self.tasks = sorted(((c, i) for c, i in instance.task_keys()),
                            key=lambda ci: (-instance.task(*ci).weight, ci))
        weights = [instance.task(*ci).weight for ci in self.tasks]
        self.rem_after = [sum(weights[k + 1:]) for k in range(len(weights))]
        self.b_min = min(r.capacity for r in instance.resources)
        self.norm = instance.num_tasks * instance.max_due_date
        n = instance.num_tasks
        self.slots = []
        for r in instance.resources:
            horizon = instance.max_due_date + n * (r.processing_time + r.setup_time) + 1
            self.slots.append(list(range(r.processing_time, horizon + 1, config.time_grid_step)))
        self.open: list[_Open] = []
        self.copies_used: dict[tuple[int, int], int] = {}
        self.archive: list[tuple[float, float]] = []
        self.incumbent = float("inf")

    def run(self) -> None:
        try:
            self._branch(0, 0.0, 0.0)
            self.completed = True
        except _OutOfBudget:
            pass

    def _tick(self) -> None:
        self.nodes += 1
        if self.max_nodes is not None and self.nodes > self.max_nodes:
            raise _OutOfBudget
        if self.deadline is not None and self.nodes % 64 == 0 and time.perf_counter() > self.deadline:
            raise _OutOfBudget

    def _scalar(self, fill: float, lead: float) -> float:
        return self.w * (1.0 - fill) + (1.0 - self.w) * lead / self.norm

    def _fill_bound(self, ratio_sum: float, k: int, rem: int) -> float:
        if k == 0:
            return 1.0
        return min(1.0, (ratio_sum + rem / self.b_min) / k)

    def _pruned(self, fill_ub: float, lead_lb: float) -> bool:
        if self.cfg.pruning == "scalar":
            return self._scalar(fill_ub, lead_lb) >= self.incumbent - TOL
        return any(f >= fill_ub - TOL and l <= lead_lb + TOL for f, l in self.archive)

    def _slot_free(self, j: int, z: int) -> bool:
        r = self.inst.resources[j]
        for b in self.open:
            if b.j != j:
                continue
            if not (b.z + r.setup_time <= z - r.processing_time or z + r.setup_time <= b.z - r.processing_time):
                return False
        return True

    def _children(self, depth: int, ratio_sum: float, lead: float) -> list[tuple]:
        c, i = self.tasks[depth]
        task = self.inst.task(c, i)
        rem = self.rem_after[depth]
        k = len(self.open)
        out = []
        for idx, b in enumerate(self.open):
            cap = self.inst.resources[b.j].capacity
            if b.c != c or b.load + task.weight > cap:
                continue
            nl = lead + abs(b.z - task.due_date)
            nr = ratio_sum + task.weight / cap
            fub = self._fill_bound(nr, k, rem)
            if not self._pruned(fub, nl):
                out.append((self._scalar(fub, nl), 0, idx, ("join", idx), nr, nl))
        for j, r in enumerate(self.inst.resources):
            if self.copies_used.get((c, j), 0) >= self.inst.virtual_copies[c][j] or task.weight > r.capacity:
                continue
            nr = ratio_sum + task.weight / r.capacity
            fub = self._fill_bound(nr, k + 1, rem)
            for z in sorted(self.slots[j], key=lambda s: (abs(s - task.due_date), s)):
                nl = lead + abs(z - task.due_date)
                # later slots are farther from the due date: the bound only worsens
                if self._pruned(fub, nl):
                    break
                if self._slot_free(j, z):
                    out.append((self._scalar(fub, nl), 1, j * 10**6 + z, ("new", j, z), nr, nl))
        out.sort(key=lambda t: t[:3])
        return out

    def _branch(self, depth: int, ratio_sum: float, lead: float) -> None:
        if depth == len(self.tasks):
            self._leaf()
            return
        c, i = self.tasks[depth]
        weight = self.inst.task(c, i).weight
        for _, _, _, move, nr, nl in self._children(depth, ratio_sum, lead):
            fub = self._fill_bound(nr, len(self.open) + (move[0] == "new"), self.rem_after[depth])
            # the archive may have grown since the children were listed
            if self._pruned(fub, nl):
                continue
            self._tick()
            if move[0] == "join":
                b = self.open[move[1]]
                b.load += weight
                b.members.append(i)
                self._branch(depth + 1, nr, nl)
                b.members.pop()
                b.load -= weight
            else:
                _, j, z = move
                self.open.append(_Open(c, j, z, weight, [i]))
                self.copies_used[(c, j)] = self.copies_used.get((c, j), 0) + 1
                self._branch(depth + 1, nr, nl)
                self.copies_used[(c, j)] -= 1
                self.open.pop()

    def _leaf(self) -> None:
        allocation, schedule = solution_from_slots(
            self.inst, [(b.c, b.j, tuple(b.members), b.z) for b in self.open], source=f"non-separation:w={self.w:g}")
        kpi = kpis(allocation, schedule, self.inst, provenance=allocation.source)
        if self.cfg.pruning == "scalar":
            value = self._scalar(kpi.filling_ratio, kpi.lead_time)
            if value >= self.incumbent - TOL:
                return
            self.incumbent = value
        else:
            point = (kpi.filling_ratio, kpi.lead_time)
            if any(f >= point[0] - TOL and l <= point[1] + TOL for f, l in self.archive):
                return
            self.archive = [(f, l) for f, l in self.archive
                            if not (point[0] >= f - TOL and point[1] <= l + TOL)] + [point]
        self.found += 1
        self.pool.add(PoolEntry(allocation, schedule, kpi, allocation.source))


def solution_from_slots(instance: ProblemInstance, batches: list[tuple[int, int, tuple[int, ...], float]],
                        source: str = "") -> tuple[Allocation, Schedule]:
    """Canonical allocation and its schedule from ``(c, j, members, completion)`` tuples."""
    rows = sorted((c, j, tuple(sorted(m)), z) for c, j, m, z in batches)
    copy_no: dict[tuple[int, int], int] = {}
    out, completion = [], {}
    for c, j, members, z in rows:
        l = copy_no.get((c, j), 0)
        copy_no[(c, j)] = l + 1
        out.append(Batch(c, j, l, members))
        completion[(c, j, l)] = float(z)
    allocation = Allocation(tuple(out), (), source)
    objective = 0.0
    for b in out:
        tasks = [instance.task(b.cluster, i) for i in b.members]
        target = batch_target([t.due_date for t in tasks], [t.weight for t in tasks])
        objective += abs(completion[(b.cluster, b.resource, b.copy)] - target)
    orders: dict[int, tuple] = {}
    for key in sorted(completion, key=lambda k: (completion[k], k)):
        orders[key[1]] = orders.get(key[1], ()) + (key,)
    precedes = {}
    for j, order in orders.items():
        for x in range(len(order)):
            for y in range(x + 1, len(order)):
                a, b = sorted((order[x], order[y]))
                precedes[(a, b)] = int(a == order[x])
    return allocation, Schedule(completion, orders, objective, precedes)


def solve_monolithic(instance: ProblemInstance, config: MonolithicConfig | None = None) -> SolutionPool:
    """Pool of all incumbents found across the scalarization weight sweep."""
    config = config or MonolithicConfig()
    require_valid(instance)
    pool = SolutionPool("non-separation")
    share = config.time_budget / len(config.weight_grid)
    stats = []
    t0 = time.perf_counter()
    for w in config.weight_grid:
        if config.budget_mode == "work":
            search = _Search(instance, config, w, max(1, int(share * NODES_PER_SECOND)), None, pool)
        else:
            search = _Search(instance, config, w, None, time.perf_counter() + share, pool)
        search.run()
        stats.append({"weight": w, "nodes": search.nodes, "incumbents": search.found,
                      "completed": search.completed})
    pool.sort()
    pool.diagnostics = {"searches": stats, "budget_mode": config.budget_mode,
                        "time_budget": config.time_budget,
                        "all_completed": all(s["completed"] for s in stats)}
    pool.wall_time = time.perf_counter() - t0
    return pool
