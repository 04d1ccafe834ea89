"""Problem data model, random benchmark generator and instance files.

A problem instance groups tasks into clusters (tasks of one cluster may share
a melt) and lists the physical resources (furnaces).  Each physical resource
``j`` can be reused up to ``virtual_copies[c][j]`` times by cluster ``c``;
every reuse is one *virtual resource* or batch.

Tasks and resources are addressed positionally throughout the package:
``(c, i)`` is the ``i``-th task of the ``c``-th cluster and ``j`` the
``j``-th resource.  The ``cluster_id``/``task_id``/``resource_id`` fields are
labels carried through files and reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Task:
    cluster_id: int
    task_id: int
    weight: int
    due_date: int


@dataclass(frozen=True)
class Resource:
    resource_id: int
    capacity: int
    setup_time: int = 0
    processing_time: int = 1


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    tasks: tuple[Task, ...]


@dataclass(frozen=True)
class ProblemInstance:
    clusters: tuple[Cluster, ...]
    resources: tuple[Resource, ...]
    virtual_copies: tuple[tuple[int, ...], ...]
    seed: int = 0
    label: str = ""

    @property
    def num_tasks(self) -> int:
        return sum(len(cl.tasks) for cl in self.clusters)

    def task(self, c: int, i: int) -> Task:
        return self.clusters[c].tasks[i]

    def task_keys(self) -> list[tuple[int, int]]:
        """Positional ``(c, i)`` keys of every task, in cluster order."""
        return [(c, i) for c, cl in enumerate(self.clusters) for i in range(len(cl.tasks))]

    @property
    def max_due_date(self) -> int:
        return max(t.due_date for cl in self.clusters for t in cl.tasks)

    @property
    def total_weight(self) -> int:
        return sum(t.weight for cl in self.clusters for t in cl.tasks)


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs of the single-furnace benchmark generator.

    ``virtual_copies`` is ``"auto"`` (tight cap, see :func:`default_virtual_copies`),
    ``"max"`` (one copy per task) or an explicit positive integer.
    """

    weight_range: tuple[int, int] = (1, 10)
    due_range: tuple[int, int] = (3, 30)
    capacity: int = 20
    setup_time: int = 0
    processing_time: int = 1
    virtual_copies: str | int = "auto"


@dataclass(frozen=True)
class Finding:
    code: str
    message: str


@dataclass
class ValidationReport:
    """Collected invariant violations; empty means well-formed."""

    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, message: str) -> None:
        self.findings.append(Finding(code, message))

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"[{f.code}] {f.message}" for f in self.findings)


class InstanceError(ValueError):
    """Raised when an instance is rejected (invalid data or malformed file)."""

    def __init__(self, message: str, report: ValidationReport | None = None):
        super().__init__(message)
        self.report = report


def default_virtual_copies(num_tasks: int, total_weight: int, capacity: int) -> int:
    return min(num_tasks, math.ceil(total_weight / capacity) + 2)


def generate_instance(num_tasks: int, seed: int, params: GeneratorParams | None = None) -> ProblemInstance:
    """Random single-cluster, single-furnace instance.

    Weights and due dates are drawn i.i.d. from the inclusive integer ranges of
    ``params`` using ``numpy.random.default_rng(seed)``: all weights first,
    then all due dates.
    """
    params = params or GeneratorParams()
    if num_tasks < 1:
        raise InstanceError(f"num_tasks must be >= 1, got {num_tasks}")
    for name in ("weight_range", "due_range"):
        lo, hi = getattr(params, name)
        if lo > hi:
            raise InstanceError(f"{name}: low {lo} > high {hi}")
    if params.weight_range[0] < 1 or params.due_range[0] < 1:
        raise InstanceError("weights and due dates must be >= 1")
    if params.capacity < 1 or params.processing_time < 1 or params.setup_time < 0:
        raise InstanceError("capacity/processing_time must be >= 1 and setup_time >= 0")

    rng = np.random.default_rng(seed)
    weights = rng.integers(params.weight_range[0], params.weight_range[1] + 1, size=num_tasks)
    dues = rng.integers(params.due_range[0], params.due_range[1] + 1, size=num_tasks)
    tasks = tuple(Task(0, i, int(w), int(d)) for i, (w, d) in enumerate(zip(weights, dues)))

    if params.virtual_copies == "auto":
        v = default_virtual_copies(num_tasks, int(weights.sum()), params.capacity)
    elif params.virtual_copies == "max":
        v = num_tasks
    else:
        v = int(params.virtual_copies)
    resource = Resource(0, params.capacity, params.setup_time, params.processing_time)
    return ProblemInstance(
        clusters=(Cluster(0, tasks),),
        resources=(resource,),
        virtual_copies=((v,),),
        seed=seed,
        label=f"n{num_tasks}-seed{seed}",
    )


def validate_instance(instance: ProblemInstance) -> ValidationReport:
    rep = ValidationReport()
    C, U = len(instance.clusters), len(instance.resources)
    if C < 1:
        rep.add("no-clusters", "instance has no clusters")
    if U < 1:
        rep.add("no-resources", "instance has no resources")

    seen: set[tuple[int, int]] = set()
    for c, cl in enumerate(instance.clusters):
        if not cl.tasks:
            rep.add("empty-cluster", f"cluster {cl.cluster_id} has no tasks")
        for t in cl.tasks:
            key = (t.cluster_id, t.task_id)
            if key in seen:
                rep.add("duplicate-task", f"task {key} appears twice")
            seen.add(key)
            if t.weight < 1:
                rep.add("bad-weight", f"task {key}: weight {t.weight} < 1")
            if t.due_date < 1:
                rep.add("bad-due-date", f"task {key}: due_date {t.due_date} < 1")

    for r in instance.resources:
        if r.capacity < 1:
            rep.add("bad-capacity", f"resource {r.resource_id}: capacity {r.capacity} < 1")
        if r.setup_time < 0:
            rep.add("bad-setup", f"resource {r.resource_id}: setup_time {r.setup_time} < 0")
        if r.processing_time < 1:
            rep.add("bad-processing", f"resource {r.resource_id}: processing_time {r.processing_time} < 1")

    if len(instance.virtual_copies) != C or any(len(row) != U for row in instance.virtual_copies):
        rep.add("bad-virtual-copies", f"virtual_copies must be a {C}x{U} table")
        return rep

    max_cap = max((r.capacity for r in instance.resources), default=0)
    for c, cl in enumerate(instance.clusters):
        n_c = len(cl.tasks)
        for j, v in enumerate(instance.virtual_copies[c]):
            if not 1 <= v <= max(n_c, 1):
                rep.add("bad-virtual-copies",
                        f"virtual_copies[{c}][{j}] = {v} outside [1, {n_c}]")
        for t in cl.tasks:
            if t.weight > max_cap:
                rep.add("task-exceeds-capacity",
                        f"task {(t.cluster_id, t.task_id)}: weight {t.weight} exceeds "
                        f"largest capacity {max_cap}")
        total = sum(t.weight for t in cl.tasks)
        room = sum(v * r.capacity for v, r in zip(instance.virtual_copies[c], instance.resources))
        if total > room:
            rep.add("infeasible-allocation",
                    f"cluster {cl.cluster_id}: provably infeasible allocation, total weight "
                    f"{total} > available capacity {room}")
    return rep


def require_valid(instance: ProblemInstance) -> None:
    rep = validate_instance(instance)
    if not rep.ok:
        raise InstanceError(f"invalid instance: {rep}", rep)


# -- persistence -------------------------------------------------------------

def instance_to_dict(instance: ProblemInstance) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "label": instance.label,
        "seed": instance.seed,
        "clusters": [
            {
                "cluster_id": cl.cluster_id,
                "tasks": [
                    {"task_id": t.task_id, "weight": t.weight, "due_date": t.due_date}
                    for t in cl.tasks
                ],
            }
            for cl in instance.clusters
        ],
        "resources": [
            {
                "resource_id": r.resource_id,
                "capacity": r.capacity,
                "setup_time": r.setup_time,
                "processing_time": r.processing_time,
            }
            for r in instance.resources
        ],
        "virtual_copies": [list(row) for row in instance.virtual_copies],
    }


def _field(obj: dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    if key not in obj:
        raise InstanceError(f"{where}: missing required field `{key}`")
    return obj[key]


def _int(obj: dict, key: str, where: str, minimum: int | None = None) -> int:
    value = _field(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceError(f"{where}.{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InstanceError(f"{where}.{key}: must be >= {minimum}, got {value}")
    return value


def _list(obj: dict, key: str, where: str) -> list:
    value = _field(obj, key, where)
    if not isinstance(value, list):
        raise InstanceError(f"{where}.{key}: expected an array")
    return value


def instance_from_dict(doc: dict[str, Any]) -> ProblemInstance:
    version = _field(doc, "schema_version", "document")
    if version != SCHEMA_VERSION:
        raise InstanceError(f"schema_version mismatch: file has {version!r}, expected {SCHEMA_VERSION}")
    clusters = []
    for ci, cdoc in enumerate(_list(doc, "clusters", "document")):
        where = f"clusters[{ci}]"
        cid = _int(cdoc, "cluster_id", where)
        tasks = []
        for ti, tdoc in enumerate(_list(cdoc, "tasks", where)):
            tw = f"{where}.tasks[{ti}]"
            tasks.append(Task(cid, _int(tdoc, "task_id", tw), _int(tdoc, "weight", tw, 1),
                              _int(tdoc, "due_date", tw, 1)))
        clusters.append(Cluster(cid, tuple(tasks)))
    resources = []
    for ri, rdoc in enumerate(_list(doc, "resources", "document")):
        rw = f"resources[{ri}]"
        resources.append(Resource(_int(rdoc, "resource_id", rw), _int(rdoc, "capacity", rw, 1),
                                  _int(rdoc, "setup_time", rw, 0), _int(rdoc, "processing_time", rw, 1)))
    copies = []
    for row_i, row in enumerate(_list(doc, "virtual_copies", "document")):
        if not isinstance(row, list):
            raise InstanceError(f"virtual_copies[{row_i}]: expected an array")
        copies.append(tuple(_int({"v": v}, "v", f"virtual_copies[{row_i}]", 1) for v in row))
    label = doc.get("label", "")
    seed = doc.get("seed", 0)
    if not isinstance(label, str):
        raise InstanceError("document.label: expected a string")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise InstanceError("document.seed: expected an integer")
    return ProblemInstance(tuple(clusters), tuple(resources), tuple(copies), seed, label)


def dumps_instance(instance: ProblemInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def loads_instance(text: str) -> ProblemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InstanceError(f"malformed instance file: line {err.lineno}, column {err.colno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise InstanceError("malformed instance file: top level must be an object")
    return instance_from_dict(doc)


def save_instance(instance: ProblemInstance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance))


def load_instance(path: str | Path) -> ProblemInstance:
    return loads_instance(Path(path).read_text())
