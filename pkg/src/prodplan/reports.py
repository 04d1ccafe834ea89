"""CSV/JSON report writers and SVG plots.

Report files are pure functions of their inputs: no timestamps, no wall
times, fixed float formatting (``repr``) and a fixed SVG hash salt.  Wall
times go to a separate ``timings.json``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import BenchmarkReport, RobustnessReport  # noqa: E402
from .metrics import FrontComparison, KpiPoint, utility  # noqa: E402

plt.rcParams["svg.hashsalt"] = "prodplan"
plt.rcParams["svg.fonttype"] = "none"

FRONT_COLUMNS = ["method", "filling_ratio", "lead_time", "normalized_utility"]


def write_csv(path: Path, header: Sequence[str], rows: list[Sequence[Any]], config: dict | None = None) -> None:
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_cell(v) for v in row] for row in rows)
    path.write_text(buf.getvalue())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def front_rows(method: str, front: Sequence[KpiPoint], l_max: float, prefix: Sequence[Any] = ()) -> list[list]:
    return [[*prefix, method, p.filling_ratio, p.lead_time, utility(p.lead_time, l_max)] for p in front]


# -- plots --------------------------------------------------------------------

def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_fronts(fronts: dict[str, Sequence[KpiPoint]], l_max: float, path: Path, title: str = "") -> None:
    """Pareto points with their dominated-region staircase in (fill, utility) space."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for method, front in fronts.items():
        pts = sorted((p.filling_ratio, utility(p.lead_time, l_max)) for p in front)
        if not pts:
            continue
        # boundary of the dominated region: height u_k over (f_{k-1}, f_k]
        line = ax.step([0.0] + [f for f, _ in pts], [pts[0][1]] + [u for _, u in pts], where="pre", alpha=0.4)
        ax.scatter([f for f, _ in pts], [u for _, u in pts], label=method, color=line[0].get_color(), s=18)
    ax.set_xlabel("filling ratio")
    ax.set_ylabel("lead-time utility (1 - L / L_max)")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)


def _grouped_bars(groups: Sequence, series: dict[str, Sequence[float | None]], ylabel: str, path: Path,
                  xlabel: str = "problem size (tasks)") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(series))
    for k, (name, values) in enumerate(series.items()):
        xs = [g + (k - (len(series) - 1) / 2) * width for g in range(len(groups))]
        ax.bar(xs, [0.0 if v is None else v for v in values], width, label=name)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels([str(g) for g in groups])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.axhline(0, color="black", linewidth=0.6)
    ax.legend(fontsize=8)
    _save(fig, path)


# -- benchmark ----------------------------------------------------------------

def benchmark_documents(report: BenchmarkReport, config: dict) -> dict[str, Any]:
    sizes = report.sizes()
    methods = sorted({c.method for c in report.cells})
    improvement = report.improvement_summary()
    hv = report.hv_summary()
    instances: dict[tuple[int, int], dict] = {}
    for c in report.cells:
        item = instances.setdefault((c.size, c.index), {
            "size": c.size, "index": c.index, "seed": c.seed, "l_max": c.l_max,
            "hypervolume": {}, "pool_size": {}, "diagnostics": {},
            "improvement_rate": report.improvements.get((c.size, c.index))})
        item["hypervolume"][c.method] = c.hypervolume
        item["pool_size"][c.method] = c.pool_size
        item["diagnostics"][c.method] = c.diagnostics
    summary = {
        "config": config,
        "baseline": report.baseline,
        "improvement_rate": {str(s): improvement[s] for s in sizes},
        "hypervolume_median": {str(s): hv.get(s, {}) for s in sizes},
        "instances": [instances[k] for k in sorted(instances)],
    }
    cell_rows = [[c.size, c.index, c.seed, c.method, c.hypervolume, c.l_max, c.pool_size, len(c.front),
                  report.improvements.get((c.size, c.index)) if c.method != report.baseline else None]
                 for c in report.cells]
    table_rows = [[s, improvement[s]["median"], improvement[s]["mean"], improvement[s]["defined"],
                   improvement[s]["undefined"], *[hv.get(s, {}).get(m) for m in methods]] for s in sizes]
    front = []
    for c in report.cells:
        front += front_rows(c.method, c.front, c.l_max, (c.size, c.index))
    return {"summary": summary, "cells": cell_rows, "table": table_rows, "fronts": front, "methods": methods}


def write_benchmark(report: BenchmarkReport, config: dict, out: Path, plots: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    docs = benchmark_documents(report, config)
    paths = [out / "benchmark.json", out / "benchmark_instances.csv", out / "benchmark_improvement.csv",
             out / "benchmark_fronts.csv"]
    write_json(paths[0], docs["summary"])
    write_csv(paths[1], ["size", "index", "seed", "method", "hypervolume", "l_max", "pool_size", "front_size",
                         "improvement_rate"], docs["cells"], config)
    write_csv(paths[2], ["size", "median_improvement_rate", "mean_improvement_rate", "defined", "undefined",
                         *[f"median_hv_{m}" for m in docs["methods"]]], docs["table"], config)
    write_csv(paths[3], ["size", "index", *FRONT_COLUMNS], docs["fronts"], config)
    if plots:
        sizes = report.sizes()
        hv = report.hv_summary()
        _grouped_bars(sizes, {m: [hv.get(s, {}).get(m) for s in sizes] for m in docs["methods"]},
                      "median hypervolume", out / "hypervolume_by_size.svg")
        imp = report.improvement_summary()
        _grouped_bars(sizes, {"median": [None if imp[s]["median"] is None else 100 * imp[s]["median"] for s in sizes],
                              "mean": [None if imp[s]["mean"] is None else 100 * imp[s]["mean"] for s in sizes]},
                      "improvement rate vs baseline (%)", out / "improvement_by_size.svg")
        fronts_dir = out / "fronts"
        fronts_dir.mkdir(exist_ok=True)
        by_instance: dict[tuple[int, int], dict] = {}
        for c in report.cells:
            by_instance.setdefault((c.size, c.index), {"l_max": c.l_max, "fronts": {}})["fronts"][c.method] = c.front
        for (s, k), item in sorted(by_instance.items()):
            plot_fronts(item["fronts"], item["l_max"], fronts_dir / f"s{s}_i{k}.svg", f"size {s}, instance {k}")
        paths += [out / "hypervolume_by_size.svg", out / "improvement_by_size.svg"]
    return paths


# -- robustness ---------------------------------------------------------------

def _swap_doc(s) -> dict | None:
    if s is None:
        return None
    return {"tasks": [list(t) for t in s.tasks], "batches": [list(b) for b in s.batches], "attempts": s.attempts}


def write_robustness(report: RobustnessReport, config: dict, out: Path, plots: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    summary = report.summary()
    doc = {
        "config": config,
        "fraction_not_improved": report.fraction_not_improved(),
        "summary": {str(s): v for s, v in summary.items()},
        "instances": [{"size": e.size, "index": e.index, "seed": e.seed, "hv_before": e.hv_before,
                       "hv_after": e.hv_after, "delta": e.delta, "rate": e.rate, "l_max": e.l_max,
                       "flagged": e.flagged, "swaps": [_swap_doc(s) for s in e.swaps]}
                      for e in report.entries],
    }
    paths = [out / "robustness.json", out / "robustness.csv", out / "robustness_summary.csv"]
    write_json(paths[0], doc)
    write_csv(paths[1], ["size", "index", "seed", "hv_before", "hv_after", "delta", "rate", "l_max",
                         "swaps_adopted", "flagged"],
              [[e.size, e.index, e.seed, e.hv_before, e.hv_after, e.delta, e.rate, e.l_max,
                sum(s is not None for s in e.swaps), e.flagged] for e in report.entries], config)
    write_csv(paths[2], ["size", "hv_before_median", "hv_after_median", "rate_median", "rate_mean"],
              [[s, v["hv_before_median"], v["hv_after_median"], v["rate_median"], v["rate_mean"]]
               for s, v in summary.items()], config)
    if plots:
        sizes = list(summary)
        _grouped_bars(sizes, {"original": [summary[s]["hv_before_median"] for s in sizes],
                              "perturbation": [summary[s]["hv_after_median"] for s in sizes]},
                      "median hypervolume", out / "robustness_by_size.svg")
        _grouped_bars(sizes, {"median": [None if summary[s]["rate_median"] is None else 100 * summary[s]["rate_median"]
                                         for s in sizes]},
                      "improvement rate after swap (%)", out / "robustness_rate_by_size.svg")
        paths += [out / "robustness_by_size.svg", out / "robustness_rate_by_size.svg"]
    return paths


# -- compare ------------------------------------------------------------------

def write_comparison(cmp: FrontComparison, config: dict, out: Path, sources: dict[str, str],
                     plots: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method, front in cmp.fronts.items():
        rows += front_rows(method, front, cmp.l_max)
    doc = {"config": config, "sources": sources, "baseline": cmp.baseline, "l_max": cmp.l_max,
           "hypervolumes": cmp.hypervolumes, "improvement_rate": cmp.improvement}
    paths = [out / "compare.json", out / "compare.csv"]
    write_json(paths[0], doc)
    write_csv(paths[1], FRONT_COLUMNS, rows, config)
    if plots:
        plot_fronts(cmp.fronts, cmp.l_max, out / "compare_fronts.svg")
        paths.append(out / "compare_fronts.svg")
    return paths
