"""Simulated annealing for QUBO models, with an exhaustive oracle.

Every read is an independent restart whose random stream comes from
``numpy.random.default_rng([master_seed, read_index])``, so any subset of
reads can be run in any order (or split across calls) and merges into the
same sample set.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numba
import numpy as np

from .qubo import QuboModel, energies, energy

BRUTE_FORCE_MAX_VARS = 24


@dataclass(frozen=True)
class SaConfig:
    num_reads: int = 1000
    sweeps_per_read: int = 1000
    beta_range: tuple[float, float] | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.num_reads < 1:
            raise ValueError("num_reads must be >= 1")
        if self.sweeps_per_read < 1:
            raise ValueError("sweeps_per_read must be >= 1")
        if self.beta_range is not None:
            lo, hi = self.beta_range
            if not 0 < lo < hi:
                raise ValueError(f"beta_range must satisfy 0 < beta_min < beta_max, got {self.beta_range}")


@dataclass
class SampleSet:
    """Samples sorted by ascending energy, ties by read index."""

    samples: np.ndarray
    energies: np.ndarray
    read_indices: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.lexsort((self.read_indices, self.energies))
        self.samples = np.asarray(self.samples, dtype=np.int8)[order]
        self.energies = np.asarray(self.energies, dtype=float)[order]
        self.read_indices = np.asarray(self.read_indices, dtype=np.int64)[order]

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def first(self) -> tuple[np.ndarray, float]:
        return self.samples[0], float(self.energies[0])

    def records(self) -> Iterable[tuple[np.ndarray, float, int]]:
        for s, e, r in zip(self.samples, self.energies, self.read_indices):
            yield s, float(e), int(r)

    @classmethod
    def merge(cls, sets: list["SampleSet"], info: dict | None = None) -> "SampleSet":
        if not sets:
            raise ValueError("nothing to merge")
        return cls(np.concatenate([s.samples for s in sets]),
                   np.concatenate([s.energies for s in sets]),
                   np.concatenate([s.read_indices for s in sets]),
                   info or dict(sets[0].info))

    def to_text(self) -> str:
        """One ``energy bit-string`` line per sample."""
        return "".join(f"{float(e)!r} {''.join(map(str, s.tolist()))}\n" for s, e in zip(self.samples, self.energies))

    @classmethod
    def from_text(cls, text: str, model: QuboModel, source: str = "import") -> "SampleSet":
        """Parse ``energy bit-string`` lines; energies are recomputed from ``model``.

        A stated energy that disagrees with the model by more than 1e-6
        (relative) is rejected, since it means the samples belong to a
        different QUBO.
        """
        rows, stated = [], []
        for ln_no, ln in enumerate(text.splitlines(), start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) != 2 or set(parts[1]) - {"0", "1"}:
                raise ValueError(f"line {ln_no}: expected `energy bit-string`, got {ln!r}")
            if len(parts[1]) != model.n_vars:
                raise ValueError(f"line {ln_no}: {len(parts[1])} bits, model has {model.n_vars}")
            stated.append(float(parts[0]))
            rows.append([int(ch) for ch in parts[1]])
        if not rows:
            raise ValueError("sample file contains no samples")
        samples = np.array(rows, dtype=np.int8)
        exact = np.array([energy(model, s) for s in samples])
        bad = np.flatnonzero(~np.isclose(exact, stated, rtol=1e-6, atol=1e-6))
        if bad.size:
            k = int(bad[0])
            raise ValueError(f"sample {k}: stated energy {stated[k]} != model energy {exact[k]}")
        return cls(samples, exact, np.arange(len(rows)), {"sampler": source})


def _row_bounds(model: QuboModel) -> np.ndarray:
    row = np.abs(np.asarray(model.linear, dtype=float)).copy()
    for (a, b), v in model.quadratic.items():
        row[a] += abs(v)
        row[b] += abs(v)
    return row


def auto_beta_range(model: QuboModel) -> tuple[float, float]:
    """Hot/cold inverse temperatures from single-flip energy-change bounds.

    The largest possible flip change is bounded by the largest row sum of
    ``|U|``; the smallest nonzero change is resolved at the scale of the
    smallest nonzero coefficient.  The hottest rung accepts the largest
    uphill move with probability 1/2, the coldest accepts the smallest one
    with probability 1/100.
    """
    row = _row_bounds(model)
    if not np.any(row > 0):
        return 1.0, 10.0
    coeffs = np.abs(np.concatenate([np.asarray(model.linear, dtype=float),
                                    np.fromiter(model.quadratic.values(), float, len(model.quadratic))]))
    beta_min = math.log(2.0) / float(row.max())
    beta_max = math.log(100.0) / float(coeffs[coeffs > 0].min())
    return beta_min, beta_max


def _csr(model: QuboModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = model.n_vars
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (a, b), v in model.quadratic.items():
        nbrs[a].append((b, v))
        nbrs[b].append((a, v))
    indptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        indptr[v + 1] = indptr[v] + len(nbrs[v])
    indices = np.zeros(indptr[-1], dtype=np.int64)
    data = np.zeros(indptr[-1], dtype=float)
    for v in range(n):
        for k, (u, w) in enumerate(sorted(nbrs[v])):
            indices[indptr[v] + k] = u
            data[indptr[v] + k] = w
    return indptr, indices, data


@numba.njit(cache=True, nogil=True)
def _anneal_read(linear, indptr, indices, data, state, betas, uniforms):
    n = state.shape[0]
    fld = linear.copy()
    for v in range(n):
        if state[v]:
            for k in range(indptr[v], indptr[v + 1]):
                fld[indices[k]] += data[k]
    for s in range(betas.shape[0]):
        beta = betas[s]
        for v in range(n):
            delta = 1 - 2 * state[v]
            de = delta * fld[v]
            if de <= 0.0 or uniforms[s, v] < math.exp(-beta * de):
                state[v] += delta
                for k in range(indptr[v], indptr[v + 1]):
                    fld[indices[k]] += delta * data[k]
    return state


def beta_ladder(model: QuboModel, config: SaConfig) -> np.ndarray:
    lo, hi = config.beta_range or auto_beta_range(model)
    if config.sweeps_per_read == 1:
        return np.array([hi])
    return np.geomspace(lo, hi, config.sweeps_per_read)


def sample(model: QuboModel, config: SaConfig, read_indices: Iterable[int] | None = None) -> SampleSet:
    """Run single-flip Metropolis annealing reads.

    ``read_indices`` selects which reads to run (default: all
    ``config.num_reads``); energies in the result are recomputed with
    :func:`energy` so they can be re-verified exactly.
    """
    n = model.n_vars
    if n < 1:
        raise ValueError("model has no variables")
    reads = list(range(config.num_reads)) if read_indices is None else list(read_indices)
    t0 = time.perf_counter()
    betas = beta_ladder(model, config)
    lin = np.asarray(model.linear, dtype=float)
    indptr, indices, data = _csr(model)
    out = np.zeros((len(reads), n), dtype=np.int8)
    for row, r in enumerate(reads):
        rng = np.random.default_rng([config.master_seed, r])
        state = rng.integers(0, 2, size=n).astype(np.int64)
        uniforms = rng.random((len(betas), n))
        out[row] = _anneal_read(lin, indptr, indices, data, state, betas, uniforms)
    en = np.array([energy(model, s) for s in out]) if reads else np.zeros(0)
    info = {"sampler": "simulated-annealing", "config": asdict(config),
            "beta_range": [float(betas[0]), float(betas[-1])],
            "wall_time": time.perf_counter() - t0}
    return SampleSet(out, en, np.array(reads, dtype=np.int64), info)


def brute_force_solve(model: QuboModel) -> tuple[np.ndarray, float]:
    """Exact minimum by enumeration; ties go to the lexicographically smallest vector."""
    n = model.n_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise ValueError(f"brute force refused: {n} variables > limit {BRUTE_FORCE_MAX_VARS}")
    if n == 0:
        return np.zeros(0, dtype=np.int8), float(model.offset)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    chunk = 1 << min(n, 16)
    best_e, best_k = math.inf, -1
    scale = max(1.0, float(np.abs(model.upper).sum()))
    for start in range(0, 1 << n, chunk):
        ks = np.arange(start, start + chunk, dtype=np.int64)
        bits = ((ks[:, None] >> shifts) & 1).astype(float)
        e = energies(model, bits)
        lo = float(e.min())
        if lo < best_e - 1e-9 * scale:
            best_e = lo
            best_k = int(ks[np.flatnonzero(e <= lo + 1e-9 * scale)[0]])
    q = ((best_k >> shifts) & 1).astype(np.int8)
    return q, energy(model, q)


class SimulatedAnnealingSampler:
    def __init__(self, config: SaConfig | None = None):
        self.config = config or SaConfig()

    def sample(self, model: QuboModel, read_indices: Iterable[int] | None = None) -> SampleSet:
        return sample(model, self.config, read_indices)


class ExactSampler:
    """Brute-force ground state wrapped in the sampler interface."""

    def sample(self, model: QuboModel, read_indices: Iterable[int] | None = None) -> SampleSet:
        q, e = brute_force_solve(model)
        return SampleSet(q[None, :], np.array([e]), np.array([0]), {"sampler": "exact"})


class ImportedSampler:
    """Replays samples produced elsewhere (``energy bit-string`` file)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def sample(self, model: QuboModel, read_indices: Iterable[int] | None = None) -> SampleSet:
        return SampleSet.from_text(self.path.read_text(), model, source=f"import:{self.path.name}")
