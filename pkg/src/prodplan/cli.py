"""Command-line interface: ``prodplan <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error, 4 empty result.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import reports
from .config import ConfigError, RunConfig, dumps_config, load_config, provenance
from .experiments import (NON_SEPARATION, SEPARATION_IMPORT, SEPARATION_SA, ExternalSamplerRequired,
                          instance_seed, run_benchmark, run_method, run_robustness)
from .instance import InstanceError, generate_instance, instance_to_dict, load_instance, validate_instance
from .metrics import compare_fronts, hypervolume
from .pool import load_pool, save_pool
from .qubo import audit_allocation
from .scheduler import ScheduleError, build_schedule_problem, validate_schedule

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_EMPTY = 0, 2, 3, 4
SOLVE_METHODS = (SEPARATION_SA, NON_SEPARATION, SEPARATION_IMPORT)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--threads", type=_positive_int, help="worker threads for experiment cells")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")

    parser = argparse.ArgumentParser(prog="prodplan", description="Batch allocation and scheduling: "
                                     "QUBO separation pipeline vs a joint branch-and-bound baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write random benchmark instances")
    p.add_argument("--size", type=_positive_int, required=True, help="tasks per instance")
    p.add_argument("--count", type=_positive_int, default=10)

    p = sub.add_parser("solve", parents=[common], help="solve one instance with one method")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--method", choices=SOLVE_METHODS, default=SEPARATION_SA)
    p.add_argument("--samples", type=Path, help="`energy bit-string` sample file for separation-import")

    p = sub.add_parser("compare", parents=[common], help="hypervolume comparison of saved pools")
    p.add_argument("--pools", type=Path, nargs="+", required=True)
    p.add_argument("--baseline", help="baseline method (default: non-separation if present, else the first pool)")
    p.add_argument("--no-plots", action="store_true")

    for name, text in (("benchmark", "separation vs baseline over generated instances"),
                       ("robustness", "swap-perturbation study of separation pools")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--no-plots", action="store_true")
    p.add_argument("--pareto-only", action="store_true", help="perturb only Pareto-optimal entries")

    p = sub.add_parser("validate", parents=[common], help="check instance files (and optionally a pool)")
    p.add_argument("--instance", type=Path, nargs="+", required=True)
    p.add_argument("--pool", type=Path, help="pool JSON to audit against the (single) instance")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "pareto_only", False):
        cfg = replace(cfg, robustness={"pareto_only": True})
    return cfg


def _load_instance(path: Path):
    try:
        return load_instance(path)
    except OSError as err:
        raise CliError(f"cannot read instance {path}: {err.strerror or err}", EXIT_IO) from err
    except InstanceError as err:
        raise CliError(f"{path}: {err}", EXIT_USAGE) from err


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CliError(f"cannot create output directory {path}: {err.strerror or err}", EXIT_IO) from err


def cmd_generate(args, cfg: RunConfig) -> int:
    _mkdir(args.out)
    print(f"# generated {args.count} instances of size {args.size} (master seed {cfg.master_seed})")
    for k in range(args.count):
        seed = instance_seed(cfg.master_seed, args.size, k)
        inst = generate_instance(args.size, seed, cfg.generator)
        inst = replace(inst, label=f"s{args.size}_i{k}")
        doc = instance_to_dict(inst)
        doc["config"] = {"master_seed": cfg.master_seed, "size": args.size, "index": k,
                         "generator": provenance(cfg)["generator"]}
        path = args.out / f"inst_s{args.size}_i{k}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(f"{path.name}\tseed={seed}\ttasks={inst.num_tasks}\ttotal_weight={inst.total_weight}"
              f"\tvirtual_copies={inst.virtual_copies[0][0]}")
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig) -> int:
    inst = _load_instance(args.instance)
    sep = replace(cfg.separation, master_seed=cfg.master_seed)
    mono = replace(cfg.monolithic, master_seed=cfg.master_seed)
    if args.samples is not None and not args.samples.exists():
        raise CliError(f"sample file {args.samples} not found", EXIT_IO)
    try:
        pool = run_method(args.method, inst, sep, mono, args.samples)
    except ExternalSamplerRequired as err:
        raise CliError(str(err), EXIT_USAGE) from err
    _mkdir(args.out)
    conf = {**provenance(cfg), "method": args.method, "instance": str(args.instance),
            "samples": None if args.samples is None else str(args.samples)}
    save_pool(pool, args.out / f"pool_{args.method}.json", inst, {"config": conf})
    front = pool.front()
    l_max = max((p.lead_time for p in pool.points()), default=0.0)
    reports.write_csv(args.out / f"front_{args.method}.csv", reports.FRONT_COLUMNS,
                      reports.front_rows(args.method, front, l_max), conf)
    if not pool.entries:
        print(f"{args.method}: empty pool ({pool.diagnostics.get('warning', 'no solutions')}); "
              f"artifacts written to {args.out}", file=sys.stderr)
        return EXIT_EMPTY
    print(f"{args.method}: {len(pool)} solutions, {len(front)} on the Pareto front")
    print(f"hypervolume {hypervolume(front, l_max):.6f} (L_max = {l_max:g})")
    print("warning: L_max is taken from this pool alone; use `compare` for cross-method hypervolumes",
          file=sys.stderr)
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    points, sources = {}, {}
    for path in args.pools:
        try:
            pool = load_pool(path)
        except OSError as err:
            raise CliError(f"cannot read pool {path}: {err.strerror or err}", EXIT_IO) from err
        except (ValueError, KeyError, TypeError) as err:
            raise CliError(f"{path}: not a pool file ({err})", EXIT_IO) from err
        name = pool.method if pool.method not in points else f"{pool.method}:{path.stem}"
        points[name] = pool.points()
        sources[name] = str(path)
    if len(points) < 2:
        raise CliError("compare needs at least two pools", EXIT_USAGE)
    baseline = args.baseline or (NON_SEPARATION if NON_SEPARATION in points else next(iter(points)))
    if baseline not in points:
        raise CliError(f"baseline {baseline!r} not among {sorted(points)}", EXIT_USAGE)
    cmp = compare_fronts(points, baseline)
    reports.write_comparison(cmp, provenance(cfg), args.out, sources, plots=not args.no_plots)
    print(f"L_max = {cmp.l_max:g}")
    for method, hv in cmp.hypervolumes.items():
        rate = cmp.improvement_percent(method)
        tail = "" if method == baseline else (", improvement undefined" if rate is None
                                              else f", improvement {rate:+.1f}%")
        print(f"{method}: hypervolume {hv:.6f}{tail}")
    return EXIT_OK


def _write_timings(out: Path, command: str, cfg: RunConfig, seconds: float, cells: list) -> None:
    reports.write_json(out / "timings.json", {"command": command, "threads": cfg.threads,
                                              "total_seconds": seconds, "cells": cells})


def cmd_benchmark(args, cfg: RunConfig) -> int:
    _mkdir(args.out)
    t0 = time.perf_counter()
    report, _ = run_benchmark(cfg.settings())
    elapsed = time.perf_counter() - t0
    reports.write_benchmark(report, provenance(cfg), args.out, plots=not args.no_plots)
    _write_timings(args.out, "benchmark", cfg, elapsed,
                   [{"size": c.size, "index": c.index, "method": c.method, "seconds": c.wall_time}
                    for c in report.cells])
    print(f"{'size':>4}  {'median':>8}  {'mean':>8}  " + "  ".join(f"{'HV ' + m:>18}" for m in cfg.methods))
    hv = report.hv_summary()
    for size, row in report.improvement_summary().items():
        med = "n/a" if row["median"] is None else f"{100 * row['median']:+.1f}%"
        mean = "n/a" if row["mean"] is None else f"{100 * row['mean']:+.1f}%"
        print(f"{size:>4}  {med:>8}  {mean:>8}  " + "  ".join(f"{hv[size].get(m, 0.0):>18.4f}" for m in cfg.methods))
    return EXIT_OK


def cmd_robustness(args, cfg: RunConfig) -> int:
    _mkdir(args.out)
    t0 = time.perf_counter()
    report = run_robustness(cfg.settings(), pareto_only=cfg.robustness["pareto_only"])
    elapsed = time.perf_counter() - t0
    reports.write_robustness(report, provenance(cfg), args.out, plots=not args.no_plots)
    _write_timings(args.out, "robustness", cfg, elapsed, [])
    for size, row in report.summary().items():
        rate = "n/a" if row["rate_median"] is None else f"{100 * row['rate_median']:+.1f}%"
        print(f"size {size}: HV before {row['hv_before_median']:.4f}, after {row['hv_after_median']:.4f}, "
              f"median rate {rate}")
    print(f"HV_after <= HV_before in {100 * report.fraction_not_improved():.1f}% of instances")
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    if args.pool is not None and len(args.instance) != 1:
        raise CliError("--pool needs exactly one --instance", EXIT_USAGE)
    failed = False
    for path in args.instance:
        try:
            inst = load_instance(path)
        except OSError as err:
            raise CliError(f"cannot read instance {path}: {err.strerror or err}", EXIT_IO) from err
        except InstanceError as err:
            print(f"{path}: invalid: {err}")
            failed = True
            continue
        rep = validate_instance(inst)
        print(f"{path}: {rep}")
        failed |= not rep.ok
    if args.pool is not None and not failed:
        try:
            pool = load_pool(args.pool)
        except OSError as err:
            raise CliError(f"cannot read pool {args.pool}: {err.strerror or err}", EXIT_IO) from err
        for k, entry in enumerate(pool.entries):
            problems = []
            if not audit_allocation(entry.allocation, inst).overall:
                problems.append("allocation violates assignment or capacity constraints")
            else:
                try:
                    srep = validate_schedule(entry.schedule, build_schedule_problem(entry.allocation, inst))
                    # stored objectives may use another target rule; only the timing checks matter here
                    problems += [str(f.message) for f in srep.findings if f.code != "objective-mismatch"]
                except ScheduleError as err:
                    problems.append(str(err))
            if problems:
                failed = True
                print(f"{args.pool} entry {k}: " + "; ".join(problems))
        print(f"{args.pool}: {len(pool)} entries checked")
    return EXIT_USAGE if failed else EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "compare": cmd_compare,
            "benchmark": cmd_benchmark, "robustness": cmd_robustness, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(dumps_config(cfg))
            return EXIT_OK
        return COMMANDS[args.command](args, cfg)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
