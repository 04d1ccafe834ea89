"""Penalty-QUBO compilation of the batch allocation model.

The allocation model assigns every task ``(c, i)`` to exactly one virtual
resource ``(c, j, l)`` without exceeding ``B_j`` and marks used copies with
``y``.  It is turned into a single energy

    H = H_filling + lam_deadline * H_deadline + lam_one_hot * H_one_hot
        + lam_capacity * H_capacity + lam_xy * H_xy

over binary variables ``x[c,i,j,l]`` and ``y[c,j,l]``.  Each squared term is
expanded with ``q**2 == q`` into an upper-triangular coefficient table; all
assignment-independent constants go to ``offset`` so that
``energy(x) == H(x)`` exactly.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .instance import ProblemInstance, require_valid

DROP_TOL = 1e-12


class XVar(NamedTuple):
    c: int
    i: int
    j: int
    l: int


class YVar(NamedTuple):
    c: int
    j: int
    l: int


@dataclass(frozen=True)
class VariableMap:
    """Ordered registry of QUBO variables.

    For every ``(c, j, l)`` block the ``y`` variable comes first, followed by
    ``x`` for each task of cluster ``c``.
    """

    tags: tuple[XVar | YVar, ...]

    @cached_property
    def index(self) -> dict[XVar | YVar, int]:
        return {tag: k for k, tag in enumerate(self.tags)}

    @property
    def n_vars(self) -> int:
        return len(self.tags)

    def __getitem__(self, tag: XVar | YVar) -> int:
        return self.index[tag]

    def tag(self, k: int) -> XVar | YVar:
        return self.tags[k]

    @classmethod
    def for_instance(cls, instance: ProblemInstance) -> "VariableMap":
        tags: list[XVar | YVar] = []
        for c, cl in enumerate(instance.clusters):
            for j in range(len(instance.resources)):
                for l in range(instance.virtual_copies[c][j]):
                    tags.append(YVar(c, j, l))
                    tags.extend(XVar(c, i, j, l) for i in range(len(cl.tasks)))
        return cls(tuple(tags))


@dataclass(frozen=True)
class PenaltyConfig:
    lambda_deadline: float
    lambda_one_hot: float
    lambda_capacity: float
    lambda_xy: float
    alpha: float = 0.95

    def __post_init__(self):
        for name in ("lambda_deadline", "lambda_one_hot", "lambda_capacity", "lambda_xy"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class QuboModel:
    """``E(q) = q^T U q + offset`` with ``U`` upper triangular.

    ``linear[k]`` is the diagonal coefficient, ``quadratic[(a, b)]`` (``a < b``)
    the coupling.  The equivalent symmetric matrix is ``(U + U.T) / 2``.
    """

    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]
    offset: float
    variable_map: VariableMap | None = None

    @property
    def n_vars(self) -> int:
        return len(self.linear)

    @cached_property
    def upper(self) -> np.ndarray:
        u = np.diag(np.asarray(self.linear, dtype=float))
        for (a, b), v in self.quadratic.items():
            u[a, b] = v
        u.setflags(write=False)
        return u

    @cached_property
    def symmetric(self) -> np.ndarray:
        u = self.upper
        s = (u + u.T) / 2.0
        s[np.diag_indices_from(s)] = np.diag(u)
        s.setflags(write=False)
        return s

    def scaled(self, factor: float) -> "QuboModel":
        return QuboModel(self.linear * factor, {k: v * factor for k, v in self.quadratic.items()},
                         self.offset * factor, self.variable_map)

    @classmethod
    def from_dense(cls, matrix, offset: float = 0.0) -> "QuboModel":
        """Fold an arbitrary square matrix into upper-triangular form."""
        m = np.asarray(matrix, dtype=float)
        n = m.shape[0]
        quad = {}
        for a in range(n):
            for b in range(a + 1, n):
                v = m[a, b] + m[b, a]
                if abs(v) > DROP_TOL:
                    quad[(a, b)] = float(v)
        return cls(np.diag(m).astype(float).copy(), quad, float(offset))


class _Accumulator:
    def __init__(self, n: int):
        self.linear = np.zeros(n)
        self.quadratic: dict[tuple[int, int], float] = defaultdict(float)
        self.offset = 0.0

    def add_square(self, terms: Sequence[tuple[float, int]], const: float, weight: float) -> None:
        """Add ``weight * (sum(a * q) + const)**2`` for distinct binary ``q``."""
        if weight == 0:
            return
        for k, (a, v) in enumerate(terms):
            self.linear[v] += weight * (a * a + 2.0 * const * a)
            for b, u in terms[k + 1:]:
                self.add_pair(v, u, weight * 2.0 * a * b)
        self.offset += weight * const * const

    def add_pair(self, v: int, u: int, coeff: float) -> None:
        if v == u:
            self.linear[v] += coeff
        else:
            self.quadratic[(min(v, u), max(v, u))] += coeff

    def build(self, vmap: VariableMap) -> QuboModel:
        quad = {k: float(v) for k, v in sorted(self.quadratic.items()) if abs(v) > DROP_TOL}
        lin = np.where(np.abs(self.linear) > DROP_TOL, self.linear, 0.0)
        return QuboModel(lin, quad, float(self.offset), vmap)


def _soft_terms(acc: _Accumulator, instance: ProblemInstance, vmap: VariableMap,
                lam_deadline: float, lam_capacity: float, alpha: float) -> None:
    for c, cl in enumerate(instance.clusters):
        due = [t.due_date for t in cl.tasks]
        weights = [t.weight for t in cl.tasks]
        for j, res in enumerate(instance.resources):
            for l in range(instance.virtual_copies[c][j]):
                y = vmap[YVar(c, j, l)]
                xs = [vmap[XVar(c, i, j, l)] for i in range(len(cl.tasks))]
                acc.linear[y] += 1.0
                # ordered pairs (i, k) and (k, i) both appear in the sum
                for a in range(len(xs)):
                    for b in range(a + 1, len(xs)):
                        acc.add_pair(xs[a], xs[b], lam_deadline * 2.0 * (due[a] - due[b]) ** 2)
                terms = [(float(w), x) for w, x in zip(weights, xs)] + [(-alpha * res.capacity, y)]
                acc.add_square(terms, 0.0, lam_capacity)


def build_qubo(instance: ProblemInstance, config: PenaltyConfig) -> QuboModel:
    require_valid(instance)
    vmap = VariableMap.for_instance(instance)
    acc = _Accumulator(vmap.n_vars)
    _soft_terms(acc, instance, vmap, config.lambda_deadline, config.lambda_capacity, config.alpha)

    U = len(instance.resources)
    for c, cl in enumerate(instance.clusters):
        for i in range(len(cl.tasks)):
            xs = [vmap[XVar(c, i, j, l)] for j in range(U) for l in range(instance.virtual_copies[c][j])]
            acc.add_square([(1.0, x) for x in xs], -1.0, config.lambda_one_hot)
            for x in xs:
                t = vmap.tag(x)
                y = vmap[YVar(c, t.j, t.l)]
                acc.add_square([(1.0, y), (-1.0, x)], -0.5, config.lambda_xy)
    return acc.build(vmap)


def _split_product_bound(capacity: int, max_weight: int) -> int:
    """Lower bound on ``L1 * L2`` for the best two-way split of any overfull batch.

    Cutting the task list where its prefix sum crosses half the load leaves a
    smaller part of at least ``(L - w_max) / 2`` with ``L >= capacity + 1``.
    """
    load = capacity + 1
    a = max(1, math.ceil((load - max_weight) / 2))
    return a * (load - a)


def default_penalties(instance: ProblemInstance) -> PenaltyConfig:
    """Instance-scaled penalty weights.

    * ``lambda_deadline = 1 / (2 D^2 N)`` with ``D`` the due-date spread.
    * ``alpha`` and ``lambda_capacity`` are chosen so that splitting any
      overfull batch into two lowers the energy by at least one unit: with
      ``P`` the split-product bound, ``(alpha B)^2 <= 1.5 P`` and
      ``lambda_capacity = 4 / P``.  Without possible overfull batches the
      target stays at ``alpha = 0.95``.
    * ``lambda_one_hot = lambda_xy = 2 (G + 1)`` where ``G`` bounds the
      largest single-bit change of the soft terms (row sums of ``|U|``).
    """
    require_valid(instance)
    n = instance.num_tasks
    dues = [t.due_date for cl in instance.clusters for t in cl.tasks]
    spread = max(max(dues) - min(dues), 1)
    lam_deadline = 1.0 / (2.0 * spread * spread * n)

    alpha = 0.95
    products = []
    for cl in instance.clusters:
        total = sum(t.weight for t in cl.tasks)
        for res in instance.resources:
            fitting = [t.weight for t in cl.tasks if t.weight <= res.capacity]
            if total > res.capacity and len(fitting) > 1:
                p = _split_product_bound(res.capacity, max(fitting))
                products.append(p)
                alpha = min(alpha, math.sqrt(1.5 * p) / res.capacity)
    if products:
        lam_capacity = 4.0 / min(products)
    else:
        lam_capacity = 1.0 / max(r.capacity for r in instance.resources) ** 2

    vmap = VariableMap.for_instance(instance)
    acc = _Accumulator(vmap.n_vars)
    _soft_terms(acc, instance, vmap, lam_deadline, lam_capacity, alpha)
    row = np.abs(acc.linear).copy()
    for (a, b), v in acc.quadratic.items():
        row[a] += abs(v)
        row[b] += abs(v)
    gain = float(row.max())
    lam = 2.0 * (gain + 1.0)
    return PenaltyConfig(lam_deadline, lam, lam_capacity, lam, alpha)


def energy(model: QuboModel, assignment) -> float:
    q = np.asarray(assignment, dtype=float)
    if q.shape != (model.n_vars,):
        raise ValueError(f"assignment length {q.shape} does not match n_vars={model.n_vars}")
    return float(q @ model.upper @ q + model.offset)


def energies(model: QuboModel, assignments: np.ndarray) -> np.ndarray:
    """Row-wise energies of a 2-D 0/1 array."""
    q = np.asarray(assignments, dtype=float)
    return np.einsum("ij,ij->i", q @ model.upper, q) + model.offset


# -- decoding ----------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    cluster: int
    resource: int
    copy: int
    members: tuple[int, ...]


@dataclass(frozen=True)
class Allocation:
    batches: tuple[Batch, ...]
    unassigned: tuple[tuple[int, int], ...] = ()
    source: str = ""

    def canonical(self) -> "Allocation":
        """Same allocation with copy labels renumbered in member order.

        Copies of one physical resource are interchangeable, so two decoded
        samples differing only in copy labels map to the same canonical form.
        """
        groups: dict[tuple[int, int], list[tuple[int, ...]]] = defaultdict(list)
        for b in self.batches:
            groups[(b.cluster, b.resource)].append(tuple(sorted(b.members)))
        out = []
        for (c, j) in sorted(groups):
            for l, members in enumerate(sorted(groups[(c, j)])):
                out.append(Batch(c, j, l, members))
        return Allocation(tuple(out), tuple(sorted(self.unassigned)), self.source)

    def key(self) -> tuple:
        can = self.canonical()
        return tuple((b.cluster, b.resource, b.members) for b in can.batches), can.unassigned

    def batch_of(self) -> dict[tuple[int, int], int]:
        """Map ``(c, i)`` -> position of its batch in ``batches``."""
        return {(b.cluster, i): k for k, b in enumerate(self.batches) for i in b.members}

    def load(self, batch: Batch, instance: ProblemInstance) -> int:
        return sum(instance.task(batch.cluster, i).weight for i in batch.members)


@dataclass(frozen=True)
class CapacityCheck:
    batch: tuple[int, int, int]
    load: int
    bound: int

    @property
    def ok(self) -> bool:
        return self.load <= self.bound


@dataclass(frozen=True)
class FeasibilityReport:
    one_hot_ok: dict[tuple[int, int], bool]
    capacity: tuple[CapacityCheck, ...]
    xy_violations: tuple[tuple[int, int, int, int], ...] = field(default=())

    @property
    def xy_link_ok(self) -> bool:
        return not self.xy_violations

    @property
    def capacity_ok(self) -> dict[tuple[int, int, int], bool]:
        return {chk.batch: chk.ok for chk in self.capacity}

    @property
    def overall(self) -> bool:
        return (all(self.one_hot_ok.values()) and all(chk.ok for chk in self.capacity)
                and self.xy_link_ok)


def audit_allocation(allocation: Allocation, instance: ProblemInstance) -> FeasibilityReport:
    """Hard check of one-hot and capacity constraints for an explicit allocation."""
    counts = {key: 0 for key in instance.task_keys()}
    for b in allocation.batches:
        for i in b.members:
            counts[(b.cluster, i)] = counts.get((b.cluster, i), 0) + 1
    checks = tuple(
        CapacityCheck((b.cluster, b.resource, b.copy), allocation.load(b, instance),
                      instance.resources[b.resource].capacity)
        for b in allocation.batches
    )
    return FeasibilityReport({k: n == 1 for k, n in counts.items()}, checks)


def decode(model: QuboModel, assignment, instance: ProblemInstance,
           source: str = "") -> tuple[Allocation, FeasibilityReport]:
    """Group set ``x`` bits into batches and audit the hard constraints.

    Capacity is audited against the true ``B_j``, not the soft target.  A task
    with several ``x`` bits set is kept in its first batch (variable order)
    and flagged in ``one_hot_ok``.
    """
    q = np.asarray(assignment)
    if q.shape != (model.n_vars,):
        raise ValueError(f"assignment length {q.shape} does not match n_vars={model.n_vars}")
    vmap = model.variable_map
    if vmap is None:
        raise ValueError("model has no variable map; cannot decode")

    hits: dict[tuple[int, int], int] = {key: 0 for key in instance.task_keys()}
    members: dict[tuple[int, int, int], list[int]] = defaultdict(list)
    xy_bad = []
    for k in np.flatnonzero(q):
        tag = vmap.tag(int(k))
        if isinstance(tag, XVar):
            hits[(tag.c, tag.i)] += 1
            if hits[(tag.c, tag.i)] == 1:
                members[(tag.c, tag.j, tag.l)].append(tag.i)
            if not q[vmap[YVar(tag.c, tag.j, tag.l)]]:
                xy_bad.append(tuple(tag))

    batches = tuple(Batch(c, j, l, tuple(sorted(m))) for (c, j, l), m in sorted(members.items()))
    unassigned = tuple(key for key, n in hits.items() if n == 0)
    alloc = Allocation(batches, unassigned, source)
    checks = tuple(
        CapacityCheck((b.cluster, b.resource, b.copy), alloc.load(b, instance),
                      instance.resources[b.resource].capacity)
        for b in batches
    )
    report = FeasibilityReport({key: n == 1 for key, n in hits.items()}, checks, tuple(xy_bad))
    return alloc, report


def encode(allocation: Allocation, model: QuboModel) -> np.ndarray:
    """Bit vector with ``x`` and ``y`` set for every batch of ``allocation``."""
    vmap = model.variable_map
    q = np.zeros(model.n_vars, dtype=np.int8)
    for b in allocation.batches:
        q[vmap[YVar(b.cluster, b.resource, b.copy)]] = 1
        for i in b.members:
            q[vmap[XVar(b.cluster, i, b.resource, b.copy)]] = 1
    return q


# -- text export -------------------------------------------------------------

def dumps_qubo(model: QuboModel) -> str:
    rows = [(k, k, float(v)) for k, v in enumerate(model.linear) if v != 0.0]
    rows += [(a, b, v) for (a, b), v in model.quadratic.items()]
    rows.sort()
    lines = [f"{model.n_vars} {len(rows)} {model.offset!r}"]
    lines += [f"{a} {b} {v!r}" for a, b, v in rows]
    return "\n".join(lines) + "\n"


def loads_qubo(text: str) -> QuboModel:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty QUBO file")
    try:
        n, m, offset = lines[0].split()
        n, m, offset = int(n), int(m), float(offset)
    except ValueError as err:
        raise ValueError(f"line 1: bad header {lines[0]!r}") from err
    if len(lines) - 1 != m:
        raise ValueError(f"header announces {m} terms, file has {len(lines) - 1}")
    linear = np.zeros(n)
    quad = {}
    for ln_no, ln in enumerate(lines[1:], start=2):
        try:
            a, b, v = ln.split()
            a, b, v = int(a), int(b), float(v)
        except ValueError as err:
            raise ValueError(f"line {ln_no}: expected `i j coeff`, got {ln!r}") from err
        if not 0 <= a <= b < n:
            raise ValueError(f"line {ln_no}: indices must satisfy 0 <= i <= j < {n}")
        if a == b:
            linear[a] = v
        else:
            quad[(a, b)] = v
    return QuboModel(linear, quad, offset)


def save_qubo(model: QuboModel, path: str | Path) -> None:
    Path(path).write_text(dumps_qubo(model))
