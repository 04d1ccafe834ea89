"""Independent reference implementations used as test oracles.

None of these reuse the library's algorithms: energies are summed term by
term from the Hamiltonian definitions, schedules come from enumerating every
processing order and running a DP over the integer time grid, fronts from
enumerating every partition of the tasks, and hypervolumes from Monte Carlo.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np

from prodplan.instance import Cluster, GeneratorParams, ProblemInstance, Resource, Task, generate_instance
from prodplan.qubo import XVar, YVar, build_qubo, default_penalties


# -- QUBO ---------------------------------------------------------------------

def reference_energy(instance: ProblemInstance, pen, q, vmap) -> float:
    x, y = {}, {}
    for k, tag in enumerate(vmap.tags):
        (x if isinstance(tag, XVar) else y)[tuple(tag)] = int(q[k])
    filling = sum(y.values())
    deadline = onehot = capacity = xy = 0.0
    for c, cl in enumerate(instance.clusters):
        n = len(cl.tasks)
        for j, res in enumerate(instance.resources):
            for l in range(instance.virtual_copies[c][j]):
                for i in range(n):
                    for k in range(n):
                        deadline += (cl.tasks[i].due_date - cl.tasks[k].due_date) ** 2 * x[c, i, j, l] * x[c, k, j, l]
                load = sum(cl.tasks[i].weight * x[c, i, j, l] for i in range(n))
                capacity += (load - pen.alpha * res.capacity * y[c, j, l]) ** 2
                for i in range(n):
                    xy += (y[c, j, l] - x[c, i, j, l] - 0.5) ** 2
        for i in range(n):
            total = sum(x[c, i, j, l] for j in range(len(instance.resources))
                        for l in range(instance.virtual_copies[c][j]))
            onehot += (total - 1) ** 2
    return (filling + pen.lambda_deadline * deadline + pen.lambda_one_hot * onehot
            + pen.lambda_capacity * capacity + pen.lambda_xy * xy)


def toy_instances(count: int = 20, max_vars: int = 20) -> list[ProblemInstance]:
    """Small instances whose default QUBO has at most ``max_vars`` variables.

    Mixes generator output (including heavy tasks, where an overfull batch
    is possible) with two-resource instances built by hand.
    """
    toys = [
        ProblemInstance((Cluster(0, (Task(0, 0, 7, 4), Task(0, 1, 6, 9))),),
                        (Resource(0, 10), Resource(1, 15)), ((1, 1),), label="two-resource-a"),
        ProblemInstance((Cluster(0, (Task(0, 0, 9, 3), Task(0, 1, 8, 3), Task(0, 2, 7, 12))),),
                        (Resource(0, 20), Resource(1, 12)), ((2, 1),), label="two-resource-b"),
        ProblemInstance((Cluster(0, (Task(0, 0, 9, 5), Task(0, 1, 8, 6), Task(0, 2, 7, 20))),),
                        (Resource(0, 20),), ((3,),), label="overfull-trap"),
    ]
    heavy = GeneratorParams(weight_range=(5, 12))
    seed = 0
    while len(toys) < count:
        n = 2 + seed % 3
        params = heavy if seed % 2 else GeneratorParams()
        inst = replace(generate_instance(n, 1000 + seed, params), label=f"gen-n{n}-s{seed}")
        if build_qubo(inst, default_penalties(inst)).n_vars <= max_vars:
            toys.append(inst)
        seed += 1
    return toys


# -- scheduling ---------------------------------------------------------------

def chain_grid_min(cost_fns, proc_times, setup: int, horizon: int) -> float:
    """Min total cost of completion times on the integer grid for a fixed order.

    ``z_0 >= R_0`` and ``z_k >= z_{k-1} + T + R_k``; DP over the grid with a
    running prefix minimum.  Each cost function maps an array of times to costs.
    """
    grid = np.arange(0, horizon + 1, dtype=float)
    best = np.where(grid >= proc_times[0], cost_fns[0](grid), math.inf)
    for k in range(1, len(cost_fns)):
        prefix = np.minimum.accumulate(best)
        gap = setup + proc_times[k]
        nxt = np.full(len(grid), math.inf)
        if gap < len(grid):
            nxt[gap:] = prefix[:len(grid) - gap] + cost_fns[k](grid[gap:])
        best = nxt
    return float(best.min())


def brute_force_schedule(targets, proc_times, setup: int) -> float:
    """Optimal total |z - F| for one resource: every order times the integer grid."""
    n = len(targets)
    horizon = int(math.ceil(max(targets))) + sum(proc_times) + n * setup + 2
    best = math.inf
    for order in itertools.permutations(range(n)):
        fns = [(lambda z, f=targets[k]: np.abs(z - f)) for k in order]
        best = min(best, chain_grid_min(fns, [proc_times[k] for k in order], setup, horizon))
    return best


# -- monolithic front ---------------------------------------------------------

def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def exhaustive_front(instance: ProblemInstance, margin: int = 3) -> list[tuple[float, float]]:
    """Exact Pareto front (fill, lead) of a single-cluster instance.

    Fill depends only on the partition and the resource of each block, so
    for each such choice only the minimum total lead matters; it is found by
    enumerating processing orders per resource with the grid DP.  The grid
    extends ``margin`` slots past the library's own horizon.
    """
    assert len(instance.clusters) == 1
    tasks = instance.clusters[0].tasks
    n = len(tasks)
    best: dict[float, float] = {}
    for part in set_partitions(list(range(n))):
        for res_choice in itertools.product(range(len(instance.resources)), repeat=len(part)):
            ok = True
            for j, r in enumerate(instance.resources):
                blocks = [b for b, rj in zip(part, res_choice) if rj == j]
                if len(blocks) > instance.virtual_copies[0][j]:
                    ok = False
                if any(sum(tasks[i].weight for i in b) > r.capacity for b in blocks):
                    ok = False
            if not ok:
                continue
            fill = sum(sum(tasks[i].weight for i in b) / instance.resources[j].capacity
                       for b, j in zip(part, res_choice)) / len(part)
            lead = 0.0
            for j, r in enumerate(instance.resources):
                blocks = [b for b, rj in zip(part, res_choice) if rj == j]
                if not blocks:
                    continue
                horizon = instance.max_due_date + n * (r.processing_time + r.setup_time) + 1 + margin
                lead += min(
                    chain_grid_min([(lambda z, b=b: sum(np.abs(z - tasks[i].due_date) for i in b)) for b in order],
                                   [r.processing_time] * len(order), r.setup_time, horizon)
                    for order in itertools.permutations(blocks))
            key = round(fill, 12)
            best[key] = min(best.get(key, math.inf), round(lead, 9))
    front, top = [], math.inf
    for fill in sorted(best, reverse=True):
        if best[fill] < top:
            front.append((fill, best[fill]))
            top = best[fill]
    return sorted(front)


# -- hypervolume --------------------------------------------------------------

def mc_hypervolume(points, samples: int, rng: np.random.Generator, chunk: int = 250_000) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the area dominated in [0, 1]^2."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        u = rng.random((m, 2))
        dominated = ((u[:, None, 0] <= pts[None, :, 0]) & (u[:, None, 1] <= pts[None, :, 1])).any(axis=1)
        hits += int(dominated.sum())
        done += m
    p = hits / samples
    return p, math.sqrt(max(p * (1 - p), 1e-12) / samples)
