"""
Weak measurements with a Gaussian pointer on a periodic position grid.

The coupling shifts the pointer by ``a_k`` when the system is in eigenspace
``k``. Eigenvalues are required to be integer multiples of the grid spacing,
so every shift is an exact circular permutation of grid points. Wraparound is
kept out of the physics by insisting that pointer wavefunctions carry
negligible probability near the grid edges.

Gaussian convention: amplitudes ``exp(-(q - q0)^2 / (4 sigma^2))``, so the
pointer *distribution* has standard deviation ``sigma``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .boundary import default_workers
from .errors import (
    EmptyPostSelectionError,
    ForbiddenTwoStateError,
    GridTooSmallError,
    IncompleteBasisError,
    LayoutError,
    QuantizationError,
)
from .hilbert import StateVector, SystemLayout, apply, apply_local, tensor_state
from .twostate import ObservableSpec, TwoState, expectation_value, make_two_state, weak_value

POINTER = "pointer"
SYSTEM = "system"
EDGE_FRACTION = 0.05
EDGE_MASS_MAX = 1e-8
POST_SELECTION_MIN = 1e-20


@dataclass(frozen=True)
class PointerGrid:
    """Positions ``origin + j * spacing`` for ``j in range(m_points)``; periodic."""

    m_points: int
    spacing: float = 1.0
    origin: float | None = None

    def __post_init__(self):
        if self.m_points < 2:
            raise ValueError("a pointer grid needs at least two points")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", -(self.m_points // 2) * self.spacing)

    @property
    def positions(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.m_points)

    @property
    def length(self) -> float:
        return self.m_points * self.spacing

    def layout(self, label: str = POINTER) -> SystemLayout:
        return SystemLayout.of((label, self.m_points))

    def contains(self, q: float) -> bool:
        return self.origin <= q <= self.origin + (self.m_points - 1) * self.spacing


def edge_mass(probabilities: np.ndarray) -> float:
    """Probability in the outermost 5% of grid points at each end."""
    width = max(1, int(np.ceil(EDGE_FRACTION * probabilities.size)))
    return float(probabilities[:width].sum() + probabilities[-width:].sum())


@dataclass(frozen=True, eq=False)
class PointerWavefunction:
    grid: PointerGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.grid.m_points:
            raise LayoutError(f"{amps.size} amplitudes for a grid of {self.grid.m_points} points")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PointerWavefunction":
        return PointerWavefunction(self.grid, self.amplitudes / self.norm)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    def edge_mass(self) -> float:
        return edge_mass(self.probabilities())

    def as_state(self, label: str = POINTER) -> StateVector:
        return StateVector(self.grid.layout(label), self.amplitudes)


def gaussian_pointer(grid: PointerGrid, center: float, sigma: float) -> PointerWavefunction:
    if not sigma > grid.spacing:
        raise GridTooSmallError(f"sigma = {sigma} must exceed the grid spacing {grid.spacing}")
    if not grid.contains(center):
        raise GridTooSmallError(f"center {center} lies outside the grid")
    if not (grid.contains(center - 6 * sigma) and grid.contains(center + 6 * sigma)):
        raise GridTooSmallError(f"6 sigma tails around {center} (sigma = {sigma}) leave the grid")
    amps = np.exp(-((grid.positions - center) ** 2) / (4 * sigma**2))
    p = PointerWavefunction(grid, amps / np.linalg.norm(amps))
    if p.edge_mass() >= EDGE_MASS_MAX:
        raise GridTooSmallError(f"pointer carries {p.edge_mass():.2e} probability near the grid edge")
    return p


def pointer_mean(p: PointerWavefunction) -> float:
    return float(np.dot(p.grid.positions, p.probabilities()))


def pointer_variance(p: PointerWavefunction) -> float:
    mu = pointer_mean(p)
    return float(np.dot((p.grid.positions - mu) ** 2, p.probabilities()))


def quantize(obs: ObservableSpec, grid: PointerGrid) -> tuple[int, ...]:
    """Grid shift (in points) for each eigenvalue."""
    shifts = []
    for a in obs.eigenvalues:
        m = round(a / grid.spacing)
        if abs(a / grid.spacing - m) > 1e-9:
            raise QuantizationError(f"eigenvalue {a} is not an integer multiple of the grid spacing {grid.spacing}")
        shifts.append(int(m))
    return tuple(shifts)


@dataclass(frozen=True, eq=False)
class ConditionalShift:
    """sum_k P_k (x) S^{m_k}, with S the one-point circular shift of the pointer.

    Applied by rolling the pointer axis, never as a dense matrix (``matrix()``
    is for small grids).
    """

    obs: ObservableSpec
    grid: PointerGrid
    shifts: tuple[int, ...]
    pointer_label: str = POINTER
    layout: SystemLayout = field(init=False)

    def __post_init__(self):
        if len(self.shifts) != len(self.obs):
            raise ValueError("one shift per eigenvalue required")
        object.__setattr__(self, "layout", self.obs.layout + self.grid.layout(self.pointer_label))

    def apply_to(self, state: StateVector) -> StateVector:
        layout = state.layout
        layout.check_sublayout(self.layout)
        axis = layout.index(self.pointer_label)
        out = np.zeros(layout.dims, dtype=complex)
        for p, m in zip(self.obs.projectors, self.shifts):
            part = apply_local(p.entries, p.layout, layout, state.amplitudes).reshape(layout.dims)
            out += np.roll(part, m, axis=axis)
        return StateVector(layout, out)

    def inverse(self) -> "ConditionalShift":
        return ConditionalShift(self.obs, self.grid, tuple(-m for m in self.shifts), self.pointer_label)

    def unitarity_error(self) -> float:
        # a sum of orthogonal projectors times permutations is unitary iff the projectors are complete
        total = sum(p.entries for p in self.obs.projectors)
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))

    def matrix(self) -> np.ndarray:
        eye = np.eye(self.grid.m_points)
        return sum(np.kron(p.entries, np.roll(eye, m, axis=0)) for p, m in zip(self.obs.projectors, self.shifts))


def weak_coupling_unitary(obs: ObservableSpec, grid: PointerGrid, pointer_label: str = POINTER) -> ConditionalShift:
    return ConditionalShift(obs, grid, quantize(obs, grid), pointer_label)


def _split(state: StateVector, pointer_label: str) -> np.ndarray:
    """Amplitudes as a (system, pointer) matrix."""
    axis = state.layout.index(pointer_label)
    t = np.moveaxis(state.tensor(), axis, -1)
    return t.reshape(-1, state.layout.dims[axis])


def system_layout(state: StateVector, pointer_label: str = POINTER) -> SystemLayout:
    return state.layout.subset(state.layout.complement([pointer_label]))


def couple(phi1: StateVector, obs: ObservableSpec, grid: PointerGrid, sigma: float) -> StateVector:
    """phi1 (x) Q(0) after the conditional shift."""
    q0 = gaussian_pointer(grid, 0.0, sigma)
    out = apply(weak_coupling_unitary(obs, grid), tensor_state([phi1.normalized(), q0.as_state()]))
    marginal = np.sum(np.abs(_split(out, POINTER)) ** 2, axis=0)
    if edge_mass(marginal / marginal.sum()) >= EDGE_MASS_MAX:
        raise GridTooSmallError("shifted pointer reaches the grid edge; enlarge the grid")
    return out


def post_select(
    composite: StateVector, phi2: StateVector, grid: PointerGrid, pointer_label: str = POINTER
) -> tuple[PointerWavefunction, float]:
    """Project the system onto ``phi2``; return the renormalized pointer and the success probability."""
    sys_layout = system_layout(composite, pointer_label)
    if phi2.layout.dims != sys_layout.dims:
        raise LayoutError(f"post-selected state on {phi2.layout.labels} does not match system {sys_layout.labels}")
    amps = phi2.amplitudes.conj() @ _split(composite, pointer_label) / phi2.norm
    success = float(np.sum(np.abs(amps) ** 2) / composite.norm**2)
    if not success >= POST_SELECTION_MIN:
        raise EmptyPostSelectionError(f"post-selection succeeds with probability {success:.3e}")
    return PointerWavefunction(grid, amps).normalized(), success


def weak_two_state(phi1: StateVector, phi2: StateVector, obs: ObservableSpec, grid: PointerGrid, sigma: float) -> TwoState:
    """History after the coupling; destiny is the post-selected composite state."""
    history = couple(phi1, obs, grid, sigma)
    phi2 = phi2.normalized()
    pointer = phi2.amplitudes.conj() @ _split(history, POINTER)
    if not np.sum(np.abs(pointer) ** 2) >= POST_SELECTION_MIN:
        raise ForbiddenTwoStateError(0.0)
    destiny = StateVector(history.layout, np.kron(phi2.amplitudes, pointer))
    return make_two_state(history, destiny)


def pointer_two_state_reading(ts: TwoState, grid: PointerGrid, pointer_label: str = POINTER) -> float:
    """Re sum_j q_j rho_jj of the pointer's reduced two-state.

    Only the diagonal is formed, so large grids stay cheap.
    """
    diag = np.sum(_split(ts.history, pointer_label) * _split(ts.destiny, pointer_label).conj(), axis=0) / ts.overlap
    return float(np.real(np.dot(grid.positions, diag)))


@dataclass(frozen=True)
class WeakConfig:
    """System states, observable and grid for a weak-measurement run.

    Eigenvalues are in position units and must be multiples of ``spacing``.
    ``basis`` lists the eigenvectors as rows; the default is the
    computational basis.
    """

    phi1: tuple[complex, ...] = (2**-0.5, 2**-0.5)
    phi2: tuple[complex, ...] = (2 / 5**0.5, -1 / 5**0.5)
    eigenvalues: tuple[float, ...] = (8.0, -8.0)
    basis: tuple[tuple[complex, ...], ...] | None = None
    m_points: int = 4096
    spacing: float = 1.0

    @property
    def layout(self) -> SystemLayout:
        return SystemLayout.of((SYSTEM, len(self.eigenvalues)))

    @property
    def grid(self) -> PointerGrid:
        return PointerGrid(self.m_points, self.spacing)

    def observable(self) -> ObservableSpec:
        basis = np.eye(len(self.eigenvalues)) if self.basis is None else np.asarray(self.basis, dtype=complex)
        return ObservableSpec.from_basis(self.layout, self.eigenvalues, basis)

    def states(self) -> tuple[StateVector, StateVector]:
        return StateVector(self.layout, self.phi1), StateVector(self.layout, self.phi2)

    @property
    def spread(self) -> float:
        return max(self.eigenvalues) - min(self.eigenvalues)

    def weak_value(self) -> complex:
        phi1, phi2 = self.states()
        return weak_value(phi1, phi2, self.observable())

    def expectation(self) -> float:
        return expectation_value(self.states()[0], self.observable())


@dataclass(frozen=True)
class SweepRow:
    sigma: float
    pointer_mean: float
    two_state_reading: float
    weak_value_real: float
    weak_value_imag: float
    abs_error: float
    success_prob: float
    strong: bool


def _sweep_row(cfg: WeakConfig, sigma: float) -> SweepRow:
    phi1, phi2 = cfg.states()
    obs, grid = cfg.observable(), cfg.grid
    aw = cfg.weak_value()
    pointer, success = post_select(couple(phi1, obs, grid, sigma), phi2, grid)
    mean = pointer_mean(pointer)
    reading = pointer_two_state_reading(weak_two_state(phi1, phi2, obs, grid, sigma), grid)
    return SweepRow(
        sigma=float(sigma),
        pointer_mean=mean,
        two_state_reading=reading,
        weak_value_real=aw.real,
        weak_value_imag=aw.imag,
        abs_error=abs(mean - aw.real),
        success_prob=success,
        strong=bool(sigma < cfg.spread),
    )


def weakness_sweep(cfg: WeakConfig, sigmas: Sequence[float], workers: int | None = None) -> list[SweepRow]:
    """Post-selected pointer mean against Re A_w for each pointer width.

    Rows come back in input order whatever the worker count. Rows with sigma
    below the eigenvalue spread are flagged ``strong``.
    """
    sigmas = list(sigmas)
    workers = min(workers or default_workers(), max(1, len(sigmas)))
    if workers == 1:
        return [_sweep_row(cfg, s) for s in sigmas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _sweep_row(cfg, s), sigmas))


def complete_postselection_check(
    phi1: StateVector,
    obs: ObservableSpec,
    grid: PointerGrid,
    sigma: float,
    basis: Sequence[StateVector | Sequence[complex]],
) -> float:
    """L1 distance between the success-weighted post-selected distributions and the unselected one."""
    dim = obs.layout.dim
    vecs = np.array([b.amplitudes if isinstance(b, StateVector) else np.asarray(b, dtype=complex) for b in basis])
    if vecs.shape != (dim, dim) or np.max(np.abs(vecs.conj() @ vecs.T - np.eye(dim))) > 1e-10:
        raise IncompleteBasisError(f"post-selection basis must be {dim} orthonormal vectors of length {dim}")
    composite = couple(phi1, obs, grid, sigma)
    unselected = np.sum(np.abs(_split(composite, POINTER)) ** 2, axis=0) / composite.norm**2
    mixture = np.zeros(grid.m_points)
    for v in vecs:
        try:
            pointer, success = post_select(composite, StateVector(obs.layout, v), grid)
        except EmptyPostSelectionError:
            continue
        mixture += success * pointer.probabilities()
    return float(np.sum(np.abs(mixture - unselected)))
