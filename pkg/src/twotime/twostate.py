"""
Two-state vectors: a forward-evolving history ket paired with a
backward-evolving destiny, plus the probability rules and weak values that
follow from them.

The destiny is stored as a ket; every use site conjugates it explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ForbiddenTwoStateError,
    IncompatibleSelectionError,
    InvalidObservableError,
    LayoutError,
    NotHermitianError,
)
from .hilbert import (
    UNITARY_TOL,
    OperatorMatrix,
    StateVector,
    SystemLayout,
    apply,
    apply_amplitudes,
    embed_operator,
    ensure_unitary,
    inner,
    outer_partial_trace,
)

ORTHOGONALITY_EPS = 1e-10
ABL_DENOMINATOR_MIN = 1e-20
WEAK_OVERLAP_MIN = 1e-10


def normalized_overlap(a: StateVector, b: StateVector) -> float:
    return abs(inner(a, b)) / (a.norm * b.norm)


@dataclass(frozen=True, eq=False)
class TwoState:
    history: StateVector
    destiny: StateVector
    overlap: complex = field(init=False)

    def __post_init__(self):
        if self.history.layout != self.destiny.layout:
            raise LayoutError(
                f"history on {self.history.layout.labels} but destiny on {self.destiny.layout.labels}"
            )
        overlap = inner(self.destiny, self.history)
        magnitude = abs(overlap) / (self.history.norm * self.destiny.norm)
        if not magnitude > ORTHOGONALITY_EPS:
            raise ForbiddenTwoStateError(magnitude)
        object.__setattr__(self, "overlap", overlap)

    @property
    def layout(self) -> SystemLayout:
        return self.history.layout

    @property
    def normalized_overlap(self) -> float:
        return abs(self.overlap) / (self.history.norm * self.destiny.norm)


@dataclass(frozen=True, eq=False)
class ReducedTwoState:
    """Partial trace of a two-state. Trace one, generally not Hermitian."""

    matrix: np.ndarray
    layout: SystemLayout

    @property
    def kept(self) -> tuple[str, ...]:
        return self.layout.labels

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    """Eigenvalues with their orthogonal eigenprojectors.

    Projectors may have any rank, so an observable on one subsystem lifted to a
    composite space (see :meth:`embed`) is still a valid spec.
    """

    eigenvalues: tuple[float, ...]
    projectors: tuple[OperatorMatrix, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.eigenvalues)
        projs = tuple(self.projectors)
        if len(vals) != len(projs) or not vals:
            raise InvalidObservableError(f"{len(vals)} eigenvalues but {len(projs)} projectors")
        if len(set(vals)) != len(vals):
            raise InvalidObservableError(f"eigenvalues must be distinct, got {vals}")
        layout = projs[0].layout
        total = np.zeros((layout.dim, layout.dim), dtype=complex)
        for k, p in enumerate(projs):
            if p.layout != layout:
                raise InvalidObservableError("projectors live on different layouts")
            m = p.entries
            if np.max(np.abs(m @ m - m)) > UNITARY_TOL:
                raise InvalidObservableError(f"projector {k} is not idempotent")
            if p.hermiticity_error() > UNITARY_TOL:
                raise InvalidObservableError(f"projector {k} is not Hermitian")
            for j in range(k):
                if np.max(np.abs(projs[j].entries @ m)) > UNITARY_TOL:
                    raise InvalidObservableError(f"projectors {j} and {k} are not orthogonal")
            total += m
        if np.max(np.abs(total - np.eye(layout.dim))) > UNITARY_TOL:
            raise InvalidObservableError("projectors do not sum to the identity")
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "projectors", projs)

    @classmethod
    def from_basis(
        cls, layout: SystemLayout, eigenvalues: Sequence[float], vectors: Sequence[Sequence[complex]]
    ) -> "ObservableSpec":
        """Non-degenerate observable from an orthonormal basis (one vector per eigenvalue)."""
        projs = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            projs.append(OperatorMatrix(layout, np.outer(v, v.conj())))
        return cls(tuple(eigenvalues), tuple(projs))

    @classmethod
    def computational(cls, layout: SystemLayout, eigenvalues: Sequence[float] | None = None) -> "ObservableSpec":
        n = layout.dim
        if eigenvalues is None:
            eigenvalues = range(n)
        return cls.from_basis(layout, list(eigenvalues), np.eye(n))

    @property
    def layout(self) -> SystemLayout:
        return self.projectors[0].layout

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def operator(self) -> OperatorMatrix:
        m = sum(a * p.entries for a, p in zip(self.eigenvalues, self.projectors))
        return OperatorMatrix(self.layout, m)

    def embed(self, target: SystemLayout) -> "ObservableSpec":
        return ObservableSpec(self.eigenvalues, tuple(embed_operator(p, target) for p in self.projectors))


def pauli_z(label: str = "q") -> ObservableSpec:
    """sigma_z on one qubit: eigenvalue +1 for index 0, -1 for index 1."""
    return ObservableSpec.computational(SystemLayout.of((label, 2)), [1.0, -1.0])


def pauli_x(label: str = "q") -> ObservableSpec:
    s = 1 / np.sqrt(2)
    return ObservableSpec.from_basis(SystemLayout.of((label, 2)), [1.0, -1.0], [[s, s], [s, -s]])


def make_two_state(history: StateVector, destiny: StateVector) -> TwoState:
    return TwoState(history, destiny)


def two_state_matrix(ts: TwoState) -> np.ndarray:
    """|his><des| / <des|his>, trace one by construction."""
    return np.outer(ts.history.amplitudes, ts.destiny.amplitudes.conj()) / ts.overlap


def evolve_two_state(ts: TwoState, u) -> TwoState:
    """Evolve both vectors by ``u``; the matrix form goes to U rho U^dag."""
    ensure_unitary(u)
    return TwoState(apply(u, ts.history), apply(u, ts.destiny))


def reduce_two_state(ts: TwoState, keep: Iterable[str]) -> ReducedTwoState:
    keep = set(keep)
    m = outer_partial_trace(ts.history, ts.destiny, keep) / ts.overlap
    return ReducedTwoState(m, ts.layout.subset(keep))


def _check_layout(state: StateVector, obs: ObservableSpec) -> None:
    # observables on a subsystem act locally on the composite state
    if not set(obs.layout.labels) <= set(state.layout.labels):
        raise LayoutError(f"state on {state.layout.labels} but observable on {obs.layout.labels}")
    state.layout.check_sublayout(obs.layout)


def abl_probabilities(psi_i: StateVector, psi_f: StateVector, obs: ObservableSpec) -> np.ndarray:
    """Pre- and post-selected outcome probabilities.

    Uses projectors, P(a_k) = |<f|P_k|i>|^2 / sum_j |<f|P_j|i>|^2, so degenerate
    (e.g. subsystem) observables are allowed.
    """
    _check_layout(psi_i, obs)
    if psi_f.layout != psi_i.layout:
        raise LayoutError(f"pre-selection on {psi_i.layout.labels} but post-selection on {psi_f.layout.labels}")
    weights = np.array([abs(np.vdot(psi_f.amplitudes, apply_amplitudes(p, psi_i))) ** 2 for p in obs.projectors])
    weights /= (psi_i.norm * psi_f.norm) ** 2
    total = weights.sum()
    if not total > ABL_DENOMINATOR_MIN:
        raise IncompatibleSelectionError(
            f"incompatible pre/post-selection: sum_j |<f|P_j|i>|^2 = {total:.3e}"
        )
    return weights / total


def born_probabilities(psi_i: StateVector, obs: ObservableSpec) -> np.ndarray:
    """<i|P_k|i>, with the state normalized first."""
    _check_layout(psi_i, obs)
    return np.array([np.vdot(psi_i.amplitudes, apply_amplitudes(p, psi_i)).real for p in obs.projectors]) / psi_i.norm**2


def _as_hermitian(a) -> OperatorMatrix:
    if isinstance(a, ObservableSpec):
        return a.operator()
    if not a.is_hermitian():
        raise NotHermitianError(f"operator is not Hermitian (max deviation {a.hermiticity_error():.3e})")
    return a


def weak_value(psi_i: StateVector, psi_f: StateVector, a) -> complex:
    """<f|A|i> / <f|i>. Invariant under rescaling either state."""
    a = _as_hermitian(a)
    overlap = inner(psi_f, psi_i)
    magnitude = abs(overlap) / (psi_i.norm * psi_f.norm)
    if not magnitude > WEAK_OVERLAP_MIN:
        raise IncompatibleSelectionError(
            f"pre- and post-selected states are nearly orthogonal: |<f|i>| = {magnitude:.3e}"
        )
    return complex(np.vdot(psi_f.amplitudes, apply_amplitudes(a, psi_i)) / overlap)


def expectation_value(psi_i: StateVector, a) -> float:
    a = _as_hermitian(a)
    value = np.vdot(psi_i.amplitudes, apply_amplitudes(a, psi_i)) / psi_i.norm**2
    scale = max(1.0, float(np.max(np.abs(a.entries))))
    if abs(value.imag) > 1e-12 * scale:
        raise NotHermitianError(f"expectation value has imaginary part {value.imag:.3e}")
    return float(value.real)
