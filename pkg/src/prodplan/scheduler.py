"""Exact batch scheduling: completion times minimizing total |z - F|.

Batches on the same physical resource may not overlap: a batch occupies
``[z - R, z]`` and consecutive batches are separated by the setup time
``T``.  With the processing order on a resource fixed, the problem is an
L1 isotonic regression (after subtracting the cumulative gap offsets), which
is solved exactly by pool-adjacent-violators.  Orders are searched
exhaustively, in lexicographic order with bound pruning.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from .instance import ProblemInstance, ValidationReport
from .qubo import Allocation, audit_allocation

MAX_BATCHES_PER_RESOURCE = 10
EPS = 1e-9

BatchKey = tuple[int, int, int]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleBatch:
    key: BatchKey
    processing_time: int
    target: float
    members: tuple[int, ...]

    @property
    def resource(self) -> int:
        return self.key[1]


@dataclass(frozen=True)
class ScheduleProblem:
    batches: tuple[ScheduleBatch, ...]
    setup_times: tuple[int, ...]
    horizon: float
    big_m: float

    def by_resource(self) -> dict[int, list[ScheduleBatch]]:
        groups: dict[int, list[ScheduleBatch]] = {}
        for b in sorted(self.batches, key=lambda b: b.key):
            groups.setdefault(b.resource, []).append(b)
        return groups

    def batch(self, key: BatchKey) -> ScheduleBatch:
        for b in self.batches:
            if b.key == key:
                return b
        raise KeyError(key)


@dataclass(frozen=True)
class Schedule:
    completion: dict[BatchKey, float]
    orders: dict[int, tuple[BatchKey, ...]]
    objective_value: float
    precedes: dict[tuple[BatchKey, BatchKey], int] = field(default_factory=dict)


def weighted_median(values: Sequence[float], weights: Sequence[float]) -> float:
    """Smallest minimizer of ``sum(w * |z - v|)``."""
    pairs = sorted(zip(values, weights))
    half = sum(weights) / 2.0
    acc = 0.0
    for v, w in pairs:
        acc += w
        if acc >= half:
            return v
    return pairs[-1][0]


def batch_target(due_dates: Sequence[int], weights: Sequence[int], rule: str = "weighted-median") -> float:
    if rule == "weighted-median":
        return weighted_median(due_dates, weights)
    if rule == "median":
        return weighted_median(due_dates, [1] * len(due_dates))
    if rule == "mean":
        return sum(due_dates) / len(due_dates)
    raise ValueError(f"unknown target rule {rule!r}")


def build_schedule_problem(allocation: Allocation, instance: ProblemInstance,
                           target_rule: str = "weighted-median") -> ScheduleProblem:
    report = audit_allocation(allocation, instance)
    if allocation.unassigned or not report.overall:
        raise ScheduleError("allocation is not feasible; cannot schedule it")
    batches = []
    for b in allocation.batches:
        tasks = [instance.task(b.cluster, i) for i in b.members]
        target = batch_target([t.due_date for t in tasks], [t.weight for t in tasks], target_rule)
        batches.append(ScheduleBatch((b.cluster, b.resource, b.copy),
                                     instance.resources[b.resource].processing_time, target, b.members))
    setups = tuple(r.setup_time for r in instance.resources)
    bound = (max((b.target for b in batches), default=0.0)
             + sum(b.processing_time + setups[b.resource] for b in batches) + 1)
    return ScheduleProblem(tuple(sorted(batches, key=lambda b: b.key)), setups, bound, bound)


def _chain_offsets(seq: Sequence[ScheduleBatch], setup: int) -> list[float]:
    offsets, acc = [], 0.0
    for k, b in enumerate(seq):
        acc += b.processing_time + (setup if k else 0)
        offsets.append(acc)
    return offsets


def _lower_median(values: list[float]) -> float:
    return values[(len(values) - 1) // 2]


def isotonic_l1(y: Sequence[float], lower: float | None = None) -> list[float]:
    """Non-decreasing fit minimizing ``sum |fit - y|`` (pool adjacent violators).

    Each pooled block takes its lower median, which yields the componentwise
    smallest optimal fit; ``lower`` clips the fit from below, which keeps it
    optimal for the bounded problem.
    """
    blocks: list[tuple[list[float], float, int]] = []
    for v in y:
        vals, n = [v], 1
        level = v
        while blocks and blocks[-1][1] > level:
            pvals, _, pn = blocks.pop()
            vals = sorted(pvals + vals)
            n += pn
            level = _lower_median(vals)
        blocks.append((vals, level, n))
    fit = []
    for _, level, n in blocks:
        if lower is not None and level < lower:
            level = lower
        fit.extend([level] * n)
    return fit


def _chain_fit(seq: Sequence[ScheduleBatch], setup: int) -> tuple[list[float], float]:
    offsets = _chain_offsets(seq, setup)
    u = isotonic_l1([b.target - g for b, g in zip(seq, offsets)], lower=0.0)
    times = [ui + g for ui, g in zip(u, offsets)]
    return times, sum(abs(z - b.target) for z, b in zip(times, seq))


def optimal_times_for_order(order: Sequence[BatchKey], problem: ScheduleProblem) -> tuple[list[float], float]:
    """Earliest optimal completion times for batches processed in ``order``.

    ``order`` must list every batch of one resource exactly once.
    """
    if not order:
        raise ScheduleError("empty order")
    if len(set(order)) != len(order):
        raise ScheduleError(f"order repeats a batch: {order}")
    resource = order[0][1]
    expected = {b.key for b in problem.by_resource().get(resource, [])}
    if set(order) != expected:
        missing = sorted(expected - set(order))
        extra = sorted(set(order) - expected)
        raise ScheduleError(f"order must cover resource {resource} exactly; missing {missing}, unexpected {extra}")
    seq = [problem.batch(k) for k in order]
    return _chain_fit(seq, problem.setup_times[resource])


def _solve_resource(batches: list[ScheduleBatch], setup: int) -> tuple[tuple[BatchKey, ...], list[float], float]:
    # a feasible order only seeds the pruning threshold; the returned order
    # is the lexicographically smallest optimal one
    seed_seq = sorted(batches, key=lambda b: (b.target, b.key))
    _, bound = _chain_fit(seed_seq, setup)
    best: list = [bound, None, None]
    n = len(batches)

    def lower_bound(prefix: list[ScheduleBatch], rest: list[ScheduleBatch]) -> float:
        times, cost = _chain_fit(prefix, setup)
        earliest_end = _chain_offsets(prefix, setup)[-1]
        for b in rest:
            cost += max(0.0, earliest_end + setup + b.processing_time - b.target)
        return cost

    def dfs(prefix: list[ScheduleBatch], rest: list[ScheduleBatch]) -> None:
        if len(prefix) == n:
            times, cost = _chain_fit(prefix, setup)
            if (best[1] is None and cost <= best[0] + EPS) or cost < best[0] - EPS:
                best[:] = [cost, tuple(b.key for b in prefix), times]
            return
        for k, b in enumerate(rest):
            nxt = prefix + [b]
            remaining = rest[:k] + rest[k + 1:]
            if lower_bound(nxt, remaining) > best[0] + EPS:
                continue
            dfs(nxt, remaining)

    dfs([], sorted(batches, key=lambda b: b.key))
    return best[1], best[2], best[0]


def solve_schedule(problem: ScheduleProblem, max_batches: int = MAX_BATCHES_PER_RESOURCE) -> Schedule:
    """Globally optimal schedule; ties go to the lexicographically smallest order, then earliest times."""
    completion: dict[BatchKey, float] = {}
    orders: dict[int, tuple[BatchKey, ...]] = {}
    precedes: dict[tuple[BatchKey, BatchKey], int] = {}
    total = 0.0
    for resource, batches in problem.by_resource().items():
        if len(batches) > max_batches:
            raise ScheduleError(f"resource {resource} has {len(batches)} batches; exact search is "
                                f"limited to {max_batches}")
        order, times, cost = _solve_resource(batches, problem.setup_times[resource])
        orders[resource] = order
        completion.update(zip(order, times))
        for a, b in itertools.combinations(sorted(order), 2):
            precedes[(a, b)] = int(order.index(a) < order.index(b))
        total += cost
    return Schedule(completion, orders, total, precedes)


def validate_schedule(schedule: Schedule, problem: ScheduleProblem, tol: float = 1e-6) -> ValidationReport:
    rep = ValidationReport()
    for b in problem.batches:
        z = schedule.completion.get(b.key)
        if z is None:
            rep.add("missing-time", f"batch {b.key} has no completion time")
        elif z < b.processing_time - tol:
            rep.add("early-completion", f"batch {b.key} completes at {z} < processing time {b.processing_time}")
    for resource, batches in problem.by_resource().items():
        setup = problem.setup_times[resource]
        for a, b in itertools.combinations(batches, 2):
            za, zb = schedule.completion.get(a.key), schedule.completion.get(b.key)
            if za is None or zb is None:
                continue
            a_first = za + setup <= zb - b.processing_time + tol
            b_first = zb + setup <= za - a.processing_time + tol
            if not (a_first or b_first):
                rep.add("overlap", f"batches {a.key} and {b.key} overlap on resource {resource} "
                                   f"(completions {za}, {zb}, setup {setup})")
    if rep.ok:
        recomputed = sum(abs(schedule.completion[b.key] - b.target) for b in problem.batches)
        if abs(recomputed - schedule.objective_value) > tol * max(1.0, abs(recomputed)):
            rep.add("objective-mismatch", f"stored objective {schedule.objective_value} != recomputed {recomputed}")
    return rep


def dumps_milp(problem: ScheduleProblem) -> str:
    """The batch scheduling MILP in CPLEX LP text format.

    Variables are ``z_k``/``t_k`` per batch (``k`` = position in
    ``problem.batches``) and ``s_a_b`` per same-resource pair; ``s_a_b = 0``
    enforces ``a`` before ``b``, ``s_a_b = 1`` enforces ``b`` before ``a``.
    """
    idx = {b.key: k for k, b in enumerate(problem.batches)}
    m = problem.big_m
    lines = ["\\ batch scheduling, total absolute deviation from targets", "Minimize",
             " obj: " + (" + ".join(f"t_{k}" for k in range(len(problem.batches))) or "0"),
             "Subject To"]
    binaries = []
    for resource, batches in problem.by_resource().items():
        setup = problem.setup_times[resource]
        for a, b in itertools.combinations(batches, 2):
            ka, kb = idx[a.key], idx[b.key]
            s = f"s_{ka}_{kb}"
            binaries.append(s)
            lines.append(f" seq_{ka}_{kb}_a: z_{ka} - z_{kb} - {m:g} {s} <= {-(setup + b.processing_time):g}")
            lines.append(f" seq_{ka}_{kb}_b: z_{kb} - z_{ka} + {m:g} {s} <= {m - setup - a.processing_time:g}")
    for k, b in enumerate(problem.batches):
        lines.append(f" dev_{k}_lo: t_{k} + z_{k} >= {b.target:g}")
        lines.append(f" dev_{k}_hi: t_{k} - z_{k} >= {-b.target:g}")
    lines.append("Bounds")
    for k, b in enumerate(problem.batches):
        lines.append(f" {b.processing_time:g} <= z_{k} <= {problem.horizon:g}")
        lines.append(f" t_{k} >= 0")
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {s}" for s in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"
