"""Separation pipeline, the hypervolume benchmark and the swap-robustness study."""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .annealer import ImportedSampler, SaConfig, SampleSet, sample
from .instance import GeneratorParams, ProblemInstance, generate_instance, require_valid
from .metrics import KpiPoint, hypervolume, improvement_rate, kpis, pareto_filter
from .monolithic import MonolithicConfig, solve_monolithic
from .pool import PoolEntry, SolutionPool
from .qubo import Allocation, Batch, PenaltyConfig, build_qubo, decode, default_penalties
from .scheduler import build_schedule_problem, solve_schedule

# Single-flip Metropolis attempts per second of budget in "work" mode,
# including per-read random-number generation (measured, see README).
FLIPS_PER_SECOND = 24_000_000

SEPARATION_SA = "separation-sa"
SEPARATION_IMPORT = "separation-import"
SEPARATION_QA = "separation-qa"
NON_SEPARATION = "non-separation"
METHODS = (SEPARATION_SA, NON_SEPARATION, SEPARATION_IMPORT, SEPARATION_QA)
BENCHMARK_METHODS = (SEPARATION_SA, NON_SEPARATION)


class ExternalSamplerRequired(RuntimeError):
    pass


@dataclass(frozen=True)
class SeparationConfig:
    penalties: PenaltyConfig | None = None
    sa: SaConfig = SaConfig()
    target_rule: str = "weighted-median"
    time_budget: float = 0.1
    budget_mode: str = "work"
    master_seed: int = 0

    def __post_init__(self):
        if not self.time_budget > 0:
            raise ValueError("time_budget must be > 0")
        if self.budget_mode not in ("work", "wall"):
            raise ValueError(f"budget_mode must be 'work' or 'wall', got {self.budget_mode!r}")


def _schedule_allocation(allocation: Allocation, instance: ProblemInstance, target_rule: str,
                         provenance: str) -> PoolEntry:
    problem = build_schedule_problem(allocation, instance, target_rule)
    schedule = solve_schedule(problem)
    kpi = kpis(allocation, schedule, instance, provenance=provenance)
    return PoolEntry(allocation, schedule, kpi, provenance)


def _sa_reads(model, config: SeparationConfig) -> SampleSet:
    sa = replace(config.sa, master_seed=config.master_seed)
    if config.budget_mode == "work":
        per_read = sa.sweeps_per_read * model.n_vars
        reads = min(sa.num_reads, max(1, int(config.time_budget * FLIPS_PER_SECOND // per_read)))
        return sample(model, sa, range(reads))
    deadline = time.perf_counter() + config.time_budget
    chunks, start = [], 0
    while start < sa.num_reads and (not chunks or time.perf_counter() < deadline):
        stop = min(sa.num_reads, start + 8)
        chunks.append(sample(model, sa, range(start, stop)))
        start = stop
    return SampleSet.merge(chunks)


def run_separation(instance: ProblemInstance, config: SeparationConfig | None = None,
                   sampler=None, method: str = SEPARATION_SA) -> SolutionPool:
    """QUBO allocation sampling followed by exact scheduling of every distinct feasible allocation.

    ``sampler`` (anything with ``sample(model)``) replaces the built-in
    annealer, e.g. :class:`ImportedSampler` for externally produced samples.
    """
    config = config or SeparationConfig()
    require_valid(instance)
    t0 = time.perf_counter()
    penalties = config.penalties or default_penalties(instance)
    model = build_qubo(instance, penalties)
    sampleset = _sa_reads(model, config) if sampler is None else sampler.sample(model)

    pool = SolutionPool(method)
    seen: set = set()
    infeasible = duplicates = 0
    for q, _, read in sampleset.records():
        allocation, report = decode(model, q, instance, source=f"{method}:read={read}")
        if not report.overall:
            infeasible += 1
            continue
        allocation = allocation.canonical()
        key = allocation.key()
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        pool.add(_schedule_allocation(allocation, instance, config.target_rule, allocation.source))
    pool.sort()
    pool.diagnostics = {
        "reads_executed": len(sampleset),
        "feasible_unique": len(seen),
        "infeasible": infeasible,
        "duplicates": duplicates,
        "n_vars": model.n_vars,
        "penalties": {k: getattr(penalties, k) for k in penalties.__dataclass_fields__},
    }
    if not pool.entries:
        pool.diagnostics["warning"] = "no feasible allocation among the samples"
    pool.wall_time = time.perf_counter() - t0
    return pool


def run_method(method: str, instance: ProblemInstance, separation: SeparationConfig,
               monolithic: MonolithicConfig, samples_path=None) -> SolutionPool:
    if method == SEPARATION_SA:
        return run_separation(instance, separation)
    if method == NON_SEPARATION:
        return solve_monolithic(instance, monolithic)
    if method in (SEPARATION_IMPORT, SEPARATION_QA):
        if samples_path is None:
            raise ExternalSamplerRequired(
                f"{method}: external sampler required; supply a sample file (`energy bit-string` lines)")
        return run_separation(instance, separation, ImportedSampler(samples_path), method=method)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# -- benchmark ----------------------------------------------------------------

def instance_seed(master_seed: int, size: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, size, index]).generate_state(1)[0])


@dataclass
class BenchmarkCell:
    size: int
    index: int
    seed: int
    method: str
    hypervolume: float
    l_max: float
    front: list[KpiPoint]
    pool_size: int
    diagnostics: dict[str, Any]
    wall_time: float = 0.0


@dataclass
class BenchmarkReport:
    cells: list[BenchmarkCell]
    improvements: dict[tuple[int, int], float | None]
    baseline: str
    config: dict[str, Any] = field(default_factory=dict)

    def sizes(self) -> list[int]:
        return sorted({c.size for c in self.cells})

    def improvement_summary(self) -> dict[int, dict[str, Any]]:
        """Median and mean improvement rate (fraction) per size, skipping undefined rates."""
        out = {}
        for size in self.sizes():
            rates = [r for (s, _), r in sorted(self.improvements.items()) if s == size and r is not None]
            undefined = sum(1 for (s, _), r in self.improvements.items() if s == size and r is None)
            out[size] = {"median": statistics.median(rates) if rates else None,
                         "mean": statistics.fmean(rates) if rates else None,
                         "defined": len(rates), "undefined": undefined}
        return out

    def hv_summary(self) -> dict[int, dict[str, float]]:
        out: dict[int, dict[str, float]] = {}
        for size in self.sizes():
            for method in sorted({c.method for c in self.cells}):
                hvs = [c.hypervolume for c in self.cells if c.size == size and c.method == method]
                if hvs:
                    out.setdefault(size, {})[method] = statistics.median(hvs)
        return out


@dataclass(frozen=True)
class BenchmarkSettings:
    sizes: tuple[int, ...] = (6, 8, 10, 12)
    instances_per_size: int = 10
    methods: tuple[str, ...] = BENCHMARK_METHODS
    master_seed: int = 0
    generator: GeneratorParams = GeneratorParams()
    separation: SeparationConfig = SeparationConfig()
    monolithic: MonolithicConfig = MonolithicConfig()
    threads: int = 1


def _cell_configs(settings: BenchmarkSettings, seed: int) -> tuple[SeparationConfig, MonolithicConfig]:
    return (replace(settings.separation, master_seed=seed),
            replace(settings.monolithic, master_seed=seed))


def _run_instance(settings: BenchmarkSettings, size: int, index: int):
    seed = instance_seed(settings.master_seed, size, index)
    inst = generate_instance(size, seed, settings.generator)
    sep, mono = _cell_configs(settings, seed)
    pools = {m: run_method(m, inst, sep, mono) for m in settings.methods}
    return inst, seed, pools


def run_benchmark(settings: BenchmarkSettings) -> tuple[BenchmarkReport, dict]:
    """Every method on every generated instance; fronts compared under a shared ``L_max``.

    Returns the report and the pools keyed by ``(size, index, method)``.
    """
    if not settings.sizes:
        raise ValueError("sizes must be non-empty")
    for m in settings.methods:
        if m not in (SEPARATION_SA, NON_SEPARATION):
            raise ValueError(f"unknown or non-benchmarkable method {m!r}; choose from {BENCHMARK_METHODS}")
    jobs = [(size, k) for size in settings.sizes for k in range(settings.instances_per_size)]
    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as ex:
        results = list(ex.map(lambda job: _run_instance(settings, *job), jobs))

    baseline = NON_SEPARATION if NON_SEPARATION in settings.methods else settings.methods[0]
    cells, improvements, all_pools = [], {}, {}
    for (size, k), (inst, seed, pools) in zip(jobs, results):
        points = {m: p.points() for m, p in pools.items()}
        l_max = max((pt.lead_time for pts in points.values() for pt in pts), default=0.0)
        fronts = {m: pareto_filter(pts) for m, pts in points.items()}
        hvs = {m: hypervolume(f, l_max) for m, f in fronts.items()}
        for m in settings.methods:
            cells.append(BenchmarkCell(size, k, seed, m, hvs[m], l_max, fronts[m], len(pools[m]),
                                       pools[m].diagnostics, pools[m].wall_time))
            all_pools[(size, k, m)] = pools[m]
        if len(settings.methods) > 1 and SEPARATION_SA in hvs:
            improvements[(size, k)] = improvement_rate(hvs[SEPARATION_SA], hvs[baseline])
    return BenchmarkReport(cells, improvements, baseline), all_pools


# -- robustness ---------------------------------------------------------------

@dataclass(frozen=True)
class SwapRecord:
    tasks: tuple[tuple[int, int], tuple[int, int]]
    batches: tuple[tuple[int, int, int], tuple[int, int, int]]
    attempts: int


def perturb_allocation(allocation: Allocation, instance: ProblemInstance, rng: np.random.Generator,
                       max_attempts: int = 20) -> tuple[Allocation, SwapRecord | None]:
    """Swap two tasks of different batches if both batches stay within capacity.

    Pairs are drawn uniformly from all same-cluster task pairs in different
    batches; a capacity-violating draw is retried up to ``max_attempts``
    times.  Returns the input allocation and ``None`` when no swap was
    adopted.
    """
    batches = list(allocation.batches)
    if len(batches) < 2:
        return allocation, None
    where = [(k, b.cluster, i) for k, b in enumerate(batches) for i in b.members]
    pairs = [(p, q) for p in range(len(where)) for q in range(p + 1, len(where))
             if where[p][0] != where[q][0] and where[p][1] == where[q][1]]
    if not pairs:
        return allocation, None
    for attempt in range(1, max_attempts + 1):
        p, q = pairs[int(rng.integers(len(pairs)))]
        (ka, c, ia), (kb, _, ib) = where[p], where[q]
        ba, bb = batches[ka], batches[kb]
        wa, wb = instance.task(c, ia).weight, instance.task(c, ib).weight
        load_a = allocation.load(ba, instance) - wa + wb
        load_b = allocation.load(bb, instance) - wb + wa
        if load_a <= instance.resources[ba.resource].capacity and load_b <= instance.resources[bb.resource].capacity:
            new = list(batches)
            new[ka] = Batch(ba.cluster, ba.resource, ba.copy,
                            tuple(sorted([i for i in ba.members if i != ia] + [ib])))
            new[kb] = Batch(bb.cluster, bb.resource, bb.copy,
                            tuple(sorted([i for i in bb.members if i != ib] + [ia])))
            swapped = Allocation(tuple(new), allocation.unassigned, allocation.source + ":swap").canonical()
            record = SwapRecord(((c, ia), (c, ib)),
                                ((ba.cluster, ba.resource, ba.copy), (bb.cluster, bb.resource, bb.copy)), attempt)
            return swapped, record
    return allocation, None


@dataclass
class RobustnessEntry:
    size: int
    index: int
    seed: int
    hv_before: float
    hv_after: float
    l_max: float
    swaps: list[SwapRecord | None]
    flagged: bool

    @property
    def delta(self) -> float:
        return self.hv_after - self.hv_before

    @property
    def rate(self) -> float | None:
        return improvement_rate(self.hv_after, self.hv_before)


def robustness_experiment(instance: ProblemInstance, pool: SolutionPool, rng: np.random.Generator,
                          target_rule: str = "weighted-median", pareto_only: bool = False,
                          size: int = 0, index: int = 0) -> tuple[RobustnessEntry, SolutionPool]:
    """Perturb every pooled allocation once, reschedule, and compare hypervolumes.

    Both fronts are measured against ``L_max`` taken over the union of the
    original and perturbed pools.
    """
    perturbed = SolutionPool(pool.method + "+swap")
    swaps: list[SwapRecord | None] = []
    front_keys = {(p.filling_ratio, p.lead_time) for p in pool.front()}
    for entry in pool.entries:
        if pareto_only and entry.kpi.coords() not in front_keys:
            perturbed.add(entry)
            continue
        new_alloc, record = perturb_allocation(entry.allocation, instance, rng)
        swaps.append(record)
        if record is None:
            perturbed.add(entry)
        else:
            perturbed.add(_schedule_allocation(new_alloc, instance, target_rule, new_alloc.source))
    perturbed.sort()
    l_max = max((p.lead_time for p in pool.points() + perturbed.points()), default=0.0)
    hv0 = hypervolume(pool.front(), l_max)
    hv1 = hypervolume(perturbed.front(), l_max)
    flagged = all(s is None for s in swaps)
    return RobustnessEntry(size, index, instance.seed, hv0, hv1, l_max, swaps, flagged), perturbed


@dataclass
class RobustnessReport:
    entries: list[RobustnessEntry]
    config: dict[str, Any] = field(default_factory=dict)

    def fraction_not_improved(self) -> float:
        return sum(e.hv_after <= e.hv_before + 1e-12 for e in self.entries) / len(self.entries)

    def summary(self) -> dict[int, dict[str, Any]]:
        out = {}
        for size in sorted({e.size for e in self.entries}):
            es = [e for e in self.entries if e.size == size]
            rates = [e.rate for e in es if e.rate is not None]
            out[size] = {"hv_before_median": statistics.median(e.hv_before for e in es),
                         "hv_after_median": statistics.median(e.hv_after for e in es),
                         "rate_median": statistics.median(rates) if rates else None,
                         "rate_mean": statistics.fmean(rates) if rates else None}
        return out


def run_robustness(settings: BenchmarkSettings, pareto_only: bool = False,
                   pools: dict | None = None) -> RobustnessReport:
    """Swap study over the benchmark instances (separation method).

    ``pools`` may carry separation pools from :func:`run_benchmark` to avoid
    recomputing them; they are identical to a fresh run by determinism.
    """
    jobs = [(size, k) for size in settings.sizes for k in range(settings.instances_per_size)]

    def one(job):
        size, k = job
        seed = instance_seed(settings.master_seed, size, k)
        inst = generate_instance(size, seed, settings.generator)
        pool = (pools or {}).get((size, k, SEPARATION_SA))
        if pool is None:
            sep, _ = _cell_configs(settings, seed)
            pool = run_separation(inst, sep)
        rng = np.random.default_rng([settings.master_seed, size, k, 1])
        entry, _ = robustness_experiment(inst, pool, rng, settings.separation.target_rule, pareto_only, size, k)
        return entry

    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as ex:
        entries = list(ex.map(one, jobs))
    return RobustnessReport(entries)
