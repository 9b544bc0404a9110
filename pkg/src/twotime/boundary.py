"""
Choosing a special final boundary condition.

The trivial final state (the initial state evolved to the final time) is
split into branches labelled by the classical basis states of the chosen
classical subsystems; one branch is then drawn with probability equal to its
squared amplitude and used as the destiny vector.

Randomness
----------
Every draw uses numpy's ``PCG64`` bit generator. ``sample_branch`` takes one
uniform double ``u`` from ``Generator(PCG64(seed))`` and returns the first
branch (in lexicographic name order) whose cumulative weight exceeds ``u``.
Per-run seeds in ensembles are ``derive_seed(master_seed, i)``, the first
64-bit word of ``SeedSequence([master_seed, i])``.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateDecompositionError, LayoutError, TwoTimeError
from .hilbert import UNITARY_TOL, StateVector, apply, ensure_unitary
from .twostate import ObservableSpec, abl_probabilities, born_probabilities

BRANCH_EPS = 1e-12
DEFINITE_TOL = 1e-9


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for run ``index`` of an ensemble."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and run indices must be nonnegative")
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def default_workers() -> int:
    env = os.environ.get("TWOTIME_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class ClassicalBasis:
    label: str
    names: tuple[str, ...]
    vectors: np.ndarray  # rows are basis kets

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=complex)
        names = tuple(str(n) for n in self.names)
        if vecs.ndim != 2 or vecs.shape[0] != vecs.shape[1]:
            raise LayoutError(f"classical basis for {self.label!r} must be square, got shape {vecs.shape}")
        if len(names) != vecs.shape[0] or len(set(names)) != len(names):
            raise LayoutError(f"need {vecs.shape[0]} distinct names for {self.label!r}, got {names}")
        gram = vecs.conj() @ vecs.T
        if np.max(np.abs(gram - np.eye(len(names)))) > UNITARY_TOL:
            raise LayoutError(f"classical basis for {self.label!r} is not orthonormal")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "names", names)

    @classmethod
    def computational(cls, label: str, names: Sequence[str]) -> "ClassicalBasis":
        return cls(label, tuple(names), np.eye(len(names)))


@dataclass(frozen=True, eq=False)
class ClassicalBasisSpec:
    """Which subsystems are classical, and their classical bases."""

    bases: tuple[ClassicalBasis, ...]

    def __post_init__(self):
        bases = tuple(self.bases)
        labels = [b.label for b in bases]
        if not bases or len(set(labels)) != len(labels):
            raise LayoutError(f"classical labels must be nonempty and distinct, got {labels}")
        object.__setattr__(self, "bases", bases)

    @classmethod
    def computational(cls, names: Mapping[str, Sequence[str]]) -> "ClassicalBasisSpec":
        return cls(tuple(ClassicalBasis.computational(label, n) for label, n in names.items()))

    @property
    def classical_labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.bases)


@dataclass(frozen=True, eq=False)
class Branch:
    names: tuple[str, ...]
    state: StateVector
    weight: float


@dataclass(frozen=True, eq=False)
class BranchDecomposition:
    classical_labels: tuple[str, ...]
    branches: tuple[Branch, ...]
    pruned_mass: float
    n_pruned: int = 0

    @property
    def weights(self) -> np.ndarray:
        return np.array([b.weight for b in self.branches])

    def names(self) -> list[tuple[str, ...]]:
        return [b.names for b in self.branches]

    def find(self, *names: str) -> Branch:
        for b in self.branches:
            if b.names == tuple(names):
                return b
        raise KeyError(names)


def trivial_final_state(psi_i: StateVector, u_total) -> StateVector:
    """The initial state unitarily evolved to the final time."""
    ensure_unitary(u_total)
    return apply(u_total, psi_i)


def _project_axis(t: np.ndarray, vec: np.ndarray, axis: int) -> np.ndarray:
    # |v><v| along one tensor axis
    coeff = np.tensordot(vec.conj(), t, axes=([0], [axis]))
    return np.moveaxis(np.multiply.outer(vec, coeff), 0, axis)


def decompose_classical_branches(final_state: StateVector, spec: ClassicalBasisSpec) -> BranchDecomposition:
    layout = final_state.layout
    axes = []
    for basis in spec.bases:
        if layout.dim_of(basis.label) != len(basis.names):
            raise LayoutError(
                f"classical basis for {basis.label!r} has {len(basis.names)} states, subsystem has "
                f"dimension {layout.dim_of(basis.label)}"
            )
        axes.append(layout.index(basis.label))

    psi = final_state.tensor() / final_state.norm
    candidates = []
    for choice in itertools.product(*(range(len(b.names)) for b in spec.bases)):
        t = psi
        for basis, axis, k in zip(spec.bases, axes, choice):
            t = _project_axis(t, basis.vectors[k], axis)
        weight = float(np.sum(np.abs(t) ** 2))
        names = tuple(basis.names[k] for basis, k in zip(spec.bases, choice))
        candidates.append((names, t, weight))

    kept = [c for c in candidates if c[2] >= BRANCH_EPS]
    pruned_mass = float(sum(c[2] for c in candidates if c[2] < BRANCH_EPS))
    if not kept:
        raise DegenerateDecompositionError("every classical branch has weight below the pruning threshold")
    total = sum(c[2] for c in kept)
    kept.sort(key=lambda c: c[0])
    branches = tuple(
        Branch(names, StateVector(layout, t.reshape(-1) / np.sqrt(w)), w / total) for names, t, w in kept
    )
    return BranchDecomposition(spec.classical_labels, branches, pruned_mass, len(candidates) - len(kept))


def _draw_index(cumulative: np.ndarray, seed: int) -> int:
    u = np.random.Generator(np.random.PCG64(seed)).random()
    return min(int(np.searchsorted(cumulative, u, side="right")), len(cumulative) - 1)


def sample_branch(decomp: BranchDecomposition, rng_seed: int) -> Branch:
    """Inverse-CDF draw over the listed branch order; deterministic in ``rng_seed``."""
    return decomp.branches[_draw_index(np.cumsum(decomp.weights), rng_seed)]


@dataclass(frozen=True)
class BornRecoveryReport:
    n_runs: int
    master_seed: int
    eigenvalues: tuple[float, ...]
    counts: tuple[int, ...]
    frequencies: tuple[float, ...]
    born: tuple[float, ...]
    z_scores: tuple[float, ...]
    branch_names: tuple[tuple[str, ...], ...]
    branch_weights: tuple[float, ...]
    branch_counts: tuple[int, ...]
    pruned_mass: float
    indefinite_runs: int = 0
    abl_per_branch: tuple[tuple[float, ...], ...] = field(default=())

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))


def _z_score(freq: float, p: float, n: int) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0 if abs(freq - p) <= 1e-12 else float("inf")
    return (freq - p) / np.sqrt(p * (1 - p) / n)


def born_recovery(
    psi_i: StateVector,
    u_total,
    spec: ClassicalBasisSpec,
    obs: ObservableSpec,
    n_runs: int,
    master_seed: int,
    workers: int | None = None,
) -> BornRecoveryReport:
    """Sample final boundary conditions and tally the outcomes ABL then assigns.

    ``obs`` is measured at the initial time; each sampled branch is evolved
    back to that time to serve as the post-selected state. When the branch
    structure correlates with ``obs`` the ABL vector is one-hot and the run
    outcome is definite. Otherwise the outcome is drawn from the ABL vector
    with the run's own generator and the run is counted as indefinite.
    """
    if n_runs < 1:
        raise TwoTimeError("n_runs must be at least 1")
    decomp = decompose_classical_branches(trivial_final_state(psi_i, u_total), spec)
    back = u_total.inverse()
    abl = [abl_probabilities(psi_i, apply(back, b.state), obs) for b in decomp.branches]
    cumulative = np.cumsum(decomp.weights)
    abl_cumulative = [np.cumsum(p) for p in abl]
    definite = [float(np.max(p)) >= 1 - DEFINITE_TOL for p in abl]

    def run_chunk(indices: range) -> tuple[np.ndarray, np.ndarray, int]:
        outcome_counts = np.zeros(len(obs), dtype=np.int64)
        branch_counts = np.zeros(len(decomp.branches), dtype=np.int64)
        indefinite = 0
        for i in indices:
            gen = np.random.Generator(np.random.PCG64(derive_seed(master_seed, i)))
            b = min(int(np.searchsorted(cumulative, gen.random(), side="right")), len(cumulative) - 1)
            branch_counts[b] += 1
            if definite[b]:
                k = int(np.argmax(abl[b]))
            else:
                indefinite += 1
                k = min(int(np.searchsorted(abl_cumulative[b], gen.random(), side="right")), len(obs) - 1)
            outcome_counts[k] += 1
        return outcome_counts, branch_counts, indefinite

    workers = workers or default_workers()
    chunk = max(1, -(-n_runs // workers))
    chunks = [range(s, min(s + chunk, n_runs)) for s in range(0, n_runs, chunk)]
    if len(chunks) == 1:
        results = [run_chunk(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    counts = sum(r[0] for r in results)
    bcounts = sum(r[1] for r in results)
    indefinite = sum(r[2] for r in results)

    born = born_probabilities(psi_i, obs)
    freqs = counts / n_runs
    return BornRecoveryReport(
        n_runs=n_runs,
        master_seed=master_seed,
        eigenvalues=obs.eigenvalues,
        counts=tuple(int(c) for c in counts),
        frequencies=tuple(float(f) for f in freqs),
        born=tuple(float(p) for p in born),
        z_scores=tuple(float(_z_score(f, p, n_runs)) for f, p in zip(freqs, born)),
        branch_names=tuple(b.names for b in decomp.branches),
        branch_weights=tuple(float(b.weight) for b in decomp.branches),
        branch_counts=tuple(int(c) for c in bcounts),
        pruned_mass=decomp.pruned_mass,
        indefinite_runs=int(indefinite),
        abl_per_branch=tuple(tuple(float(x) for x in p) for p in abl),
    )
