"""Run configuration: one JSON document resolved into the module configs.

Unknown keys are rejected so a typo never silently falls back to a default.
``threads`` is an execution setting and is kept out of :func:`provenance`,
which is what reports embed; reports are identical for any thread count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .annealer import SaConfig
from .experiments import BENCHMARK_METHODS, BenchmarkSettings, SeparationConfig
from .instance import GeneratorParams
from .monolithic import MonolithicConfig
from .qubo import PenaltyConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    threads: int = 1
    sizes: tuple[int, ...] = (6, 8, 10, 12)
    instances_per_size: int = 10
    methods: tuple[str, ...] = BENCHMARK_METHODS
    generator: GeneratorParams = GeneratorParams()
    separation: SeparationConfig = SeparationConfig()
    monolithic: MonolithicConfig = MonolithicConfig()
    robustness: dict[str, Any] = field(default_factory=lambda: {"pareto_only": False})

    def settings(self) -> BenchmarkSettings:
        return BenchmarkSettings(self.sizes, self.instances_per_size, self.methods, self.master_seed,
                                 self.generator, replace(self.separation, master_seed=self.master_seed),
                                 replace(self.monolithic, master_seed=self.master_seed), self.threads)


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    sep = cfg.separation
    return {
        "schema_version": CONFIG_VERSION,
        "master_seed": cfg.master_seed,
        "threads": cfg.threads,
        "sizes": list(cfg.sizes),
        "instances_per_size": cfg.instances_per_size,
        "methods": list(cfg.methods),
        "generator": _plain(asdict(cfg.generator)),
        "separation": {
            "time_budget": sep.time_budget,
            "budget_mode": sep.budget_mode,
            "target_rule": sep.target_rule,
            "penalties": None if sep.penalties is None else asdict(sep.penalties),
            "sa": {"num_reads": sep.sa.num_reads, "sweeps_per_read": sep.sa.sweeps_per_read,
                   "beta_range": None if sep.sa.beta_range is None else list(sep.sa.beta_range)},
        },
        "monolithic": {
            "time_budget": cfg.monolithic.time_budget,
            "weight_grid": list(cfg.monolithic.weight_grid),
            "time_grid_step": cfg.monolithic.time_grid_step,
            "budget_mode": cfg.monolithic.budget_mode,
            "pruning": cfg.monolithic.pruning,
        },
        "robustness": dict(cfg.robustness),
    }


def provenance(cfg: RunConfig) -> dict[str, Any]:
    doc = to_dict(cfg)
    del doc["threads"]
    return doc


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _check_keys(doc: dict, allowed, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed: {sorted(allowed)}")


def _build(cls, doc: dict, where: str, convert=None):
    _check_keys(doc, [f.name for f in fields(cls)], where)
    values = {k: (convert(k, v) if convert else v) for k, v in doc.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def _tuples(_key, value):
    return tuple(value) if isinstance(value, list) else value


def from_dict(doc: dict[str, Any]) -> RunConfig:
    _check_keys(doc, [f.name for f in fields(RunConfig)] + ["schema_version"], "config")
    version = doc.get("schema_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config schema_version mismatch: file has {version!r}, expected {CONFIG_VERSION}")
    base = RunConfig()
    out: dict[str, Any] = {}
    for key in ("master_seed", "threads", "instances_per_size"):
        if key in doc:
            value = doc[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"config.{key}: expected an integer, got {value!r}")
            out[key] = value
    for key in ("sizes", "methods"):
        if key in doc:
            if not isinstance(doc[key], list) or not doc[key]:
                raise ConfigError(f"config.{key}: expected a non-empty array")
            out[key] = tuple(doc[key])
    if "generator" in doc:
        out["generator"] = _build(GeneratorParams, doc["generator"], "config.generator", _tuples)
    if "separation" in doc:
        sep = dict(doc["separation"]) if isinstance(doc["separation"], dict) else doc["separation"]
        _check_keys(sep, [f.name for f in fields(SeparationConfig)], "config.separation")
        if sep.get("penalties") is not None:
            sep["penalties"] = _build(PenaltyConfig, sep["penalties"], "config.separation.penalties")
        if "sa" in sep:
            sep["sa"] = _build(SaConfig, sep["sa"], "config.separation.sa", _tuples)
        out["separation"] = _build(SeparationConfig, sep, "config.separation")
    if "monolithic" in doc:
        out["monolithic"] = _build(MonolithicConfig, doc["monolithic"], "config.monolithic", _tuples)
    if "robustness" in doc:
        _check_keys(doc["robustness"], ["pareto_only"], "config.robustness")
        out["robustness"] = {"pareto_only": bool(doc["robustness"].get("pareto_only", False))}
    cfg = replace(base, **out)
    if cfg.threads < 1:
        raise ConfigError("config.threads: must be >= 1")
    if cfg.instances_per_size < 1:
        raise ConfigError("config.instances_per_size: must be >= 1")
    if any(isinstance(s, bool) or not isinstance(s, int) or s < 1 for s in cfg.sizes):
        raise ConfigError(f"config.sizes: expected positive integers, got {list(cfg.sizes)}")
    bad = [m for m in cfg.methods if m not in BENCHMARK_METHODS]
    if bad:
        raise ConfigError(f"config.methods: {bad} cannot be benchmarked; choose from {list(BENCHMARK_METHODS)}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err
    return from_dict(doc)


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"
