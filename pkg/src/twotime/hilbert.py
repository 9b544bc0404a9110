"""
Dense linear algebra over tensor products of labelled finite subsystems.

Index convention: subsystem 0 is the most significant digit, so the composite
index of digits ``(i_0, ..., i_{n-1})`` is ``sum_s i_s * prod_{t>s} d_t``.  This is
the ordering produced by ``np.kron`` and by C-order reshapes, and every
serialized array in the package uses it.

Values are immutable: constructors copy their input arrays and mark them
read-only.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, NotUnitaryError, TwoTimeError

UNITARY_TOL = 1e-10
NORM_RTOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class ZeroStateError(TwoTimeError, ValueError):
    """The zero vector was offered as a state."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemLayout:
    """Ordered list of ``(label, dim)`` pairs describing a composite space."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        if not subs:
            raise LayoutError("a layout needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate subsystem labels in {labels}")
        for label, dim in subs:
            if dim < 1:
                raise LayoutError(f"subsystem {label!r} has dimension {dim} < 1")
        object.__setattr__(self, "subsystems", subs)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "SystemLayout":
        return cls(tuple(pairs))

    @classmethod
    def qubits(cls, *labels: str) -> "SystemLayout":
        return cls(tuple((label, 2) for label in labels))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.subsystems)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown subsystem label {label!r}; layout has {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def encode(self, digits: Sequence[int]) -> int:
        if len(digits) != len(self):
            raise LayoutError(f"expected {len(self)} digits, got {len(digits)}")
        index = 0
        for digit, dim in zip(digits, self.dims):
            if not 0 <= digit < dim:
                raise LayoutError(f"digit {digit} out of range for dimension {dim}")
            index = index * dim + int(digit)
        return index

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise LayoutError(f"index {index} out of range for total dimension {self.dim}")
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def subset(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout with the given labels, in this layout's order."""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return SystemLayout(tuple(s for s in self.subsystems if s[0] in wanted))

    def complement(self, labels: Iterable[str]) -> tuple[str, ...]:
        wanted = set(labels)
        return tuple(label for label in self.labels if label not in wanted)

    def __add__(self, other: "SystemLayout") -> "SystemLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"layout conflict: labels {sorted(clash)} appear in both parts")
        return SystemLayout(self.subsystems + other.subsystems)

    def check_sublayout(self, sub: "SystemLayout") -> None:
        for label, dim in sub.subsystems:
            if self.dim_of(label) != dim:
                raise LayoutError(
                    f"subsystem {label!r} has dimension {dim} but the target layout says {self.dim_of(label)}"
                )


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitude vector on a layout (not necessarily normalized)."""

    layout: SystemLayout
    amplitudes: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise LayoutError(
                f"{amps.size} amplitudes given for a layout of total dimension {self.layout.dim}"
            )
        norm = float(np.linalg.norm(amps))
        if not norm > 0.0:
            raise ZeroStateError("the zero vector is not a state")
        object.__setattr__(self, "amplitudes", _frozen(amps))
        object.__setattr__(self, "norm", norm)

    @classmethod
    def basis(cls, layout: SystemLayout, *digits: int) -> "StateVector":
        """Computational basis ket; pass one digit per subsystem or a flat index."""
        index = digits[0] if len(digits) == 1 and len(layout) > 1 else layout.encode(digits)
        amps = np.zeros(layout.dim, dtype=complex)
        amps[index] = 1.0
        return cls(layout, amps)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def normalized(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes / self.norm)

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.layout, self.amplitudes * factor)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem."""
        return self.amplitudes.reshape(self.layout.dims)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __repr__(self) -> str:
        return f"StateVector(layout={self.layout.labels}, norm={self.norm:.6g})"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Square complex matrix acting on a layout."""

    layout: SystemLayout
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        n = self.layout.dim
        if m.shape != (n, n):
            raise LayoutError(f"operator of shape {m.shape} does not fit a layout of dimension {n}")
        object.__setattr__(self, "entries", _frozen(m))

    @classmethod
    def identity(cls, layout: SystemLayout) -> "OperatorMatrix":
        return cls(layout, np.eye(layout.dim, dtype=complex))

    @property
    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.entries.conj().T)

    def inverse(self) -> "OperatorMatrix":
        """Inverse of a unitary (its adjoint)."""
        return self.dagger

    def unitarity_error(self) -> float:
        m = self.entries
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_error() <= tol

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def is_hermitian(self, tol: float = UNITARY_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def matrix(self) -> np.ndarray:
        return self.entries

    def apply_to(self, state: StateVector) -> StateVector:
        return apply(self, state)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.layout != self.layout:
            raise LayoutError("cannot compose operators on different layouts")
        return OperatorMatrix(self.layout, self.entries @ other.entries)


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered product of gates, each acting on a sub-layout of ``layout``.

    Used where the dense composite matrix would not fit in memory; the gates are
    contracted into the state one at a time. ``matrix()`` is available for small
    layouts.
    """

    layout: SystemLayout
    gates: tuple[OperatorMatrix, ...]

    def __post_init__(self):
        gates = tuple(self.gates)
        for gate in gates:
            self.layout.check_sublayout(gate.layout)
        object.__setattr__(self, "gates", gates)

    def apply_to(self, state: StateVector) -> StateVector:
        for gate in self.gates:
            state = apply(gate, state)
        return state

    def inverse(self) -> "Circuit":
        return Circuit(self.layout, tuple(g.dagger for g in reversed(self.gates)))

    def then(self, other: "Circuit | OperatorMatrix") -> "Circuit":
        """Circuit applying ``self`` first and ``other`` afterwards."""
        more = other.gates if isinstance(other, Circuit) else (other,)
        return Circuit(self.layout, self.gates + tuple(more))

    def unitarity_error(self) -> float:
        # each gate's defect bounds the product's defect additively (to first order)
        return float(sum(g.unitarity_error() for g in self.gates))

    def matrix(self) -> np.ndarray:
        total = np.eye(self.layout.dim, dtype=complex)
        for gate in self.gates:
            total = embed_operator(gate, self.layout).entries @ total
        return total

    def as_operator(self) -> OperatorMatrix:
        return OperatorMatrix(self.layout, self.matrix())


def ensure_unitary(u, tol: float = UNITARY_TOL) -> None:
    err = u.unitarity_error()
    if not err <= tol:
        raise NotUnitaryError(f"operator is not unitary: max |U^dag U - I| = {err:.3e} > {tol:.0e}")


def tensor_state(parts: Sequence[StateVector]) -> StateVector:
    if not parts:
        raise LayoutError("tensor_state needs at least one factor")
    layout = functools.reduce(lambda a, b: a + b, (p.layout for p in parts))
    amps = functools.reduce(np.kron, (p.amplitudes for p in parts))
    return StateVector(layout, amps)


def tensor_operator(parts: Sequence[OperatorMatrix]) -> OperatorMatrix:
    if not parts:
        raise LayoutError("tensor_operator needs at least one factor")
    layout = functools.reduce(lambda a, b: a + b, (p.layout for p in parts))
    return OperatorMatrix(layout, functools.reduce(np.kron, (p.entries for p in parts)))


def embed_operator(op: OperatorMatrix, target: SystemLayout) -> OperatorMatrix:
    """Lift ``op`` to ``target``, acting as the identity on the other subsystems."""
    sub = op.layout
    target.check_sublayout(sub)
    if sub.labels == target.labels:
        return op
    rest = target.complement(sub.labels)
    order = list(sub.labels) + list(rest)
    rest_dim = int(np.prod([target.dim_of(label) for label in rest])) if rest else 1
    m = np.kron(op.entries, np.eye(rest_dim, dtype=complex))
    n = len(order)
    t = m.reshape([target.dim_of(label) for label in order] * 2)
    perm = [order.index(label) for label in target.labels]
    t = t.transpose(perm + [n + p for p in perm])
    return OperatorMatrix(target, t.reshape(target.dim, target.dim))


def apply_local(matrix: np.ndarray, sub: SystemLayout, layout: SystemLayout, amplitudes: np.ndarray) -> np.ndarray:
    """Contract a matrix on ``sub`` into an amplitude array on ``layout``."""
    axes = [layout.index(label) for label in sub.labels]
    k = len(axes)
    t = np.asarray(amplitudes).reshape(layout.dims)
    op_t = np.asarray(matrix).reshape(sub.dims * 2)
    res = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), axes))
    res = np.moveaxis(res, list(range(k)), axes)
    return res.reshape(-1)


def apply_amplitudes(op, s: StateVector) -> np.ndarray:
    """Like :func:`apply` but returns the raw amplitude array (which may be zero)."""
    if not isinstance(op, OperatorMatrix):
        return op.apply_to(s).amplitudes
    if op.layout == s.layout:
        return op.entries @ s.amplitudes
    if not set(op.layout.labels) <= set(s.layout.labels):
        raise LayoutError(
            f"dimension mismatch: operator on {op.layout.labels} cannot act on {s.layout.labels}"
        )
    s.layout.check_sublayout(op.layout)
    return apply_local(op.entries, op.layout, s.layout, s.amplitudes)


def apply(op, s: StateVector) -> StateVector:
    """Apply an operator (or any object with ``apply_to``) to a state.

    An ``OperatorMatrix`` on a sub-layout of the state's layout is applied
    locally, without building the embedded matrix.
    """
    if not isinstance(op, OperatorMatrix):
        return op.apply_to(s)
    return StateVector(s.layout, apply_amplitudes(op, s))


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.layout != b.layout:
        raise LayoutError(f"inner product between layouts {a.layout.labels} and {b.layout.labels}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def partial_trace(m: np.ndarray, layout: SystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem not in ``keep``.

    The result is indexed by ``layout.subset(keep)``, i.e. kept subsystems stay
    in their original order.
    """
    keep = set(keep)
    if not keep:
        raise LayoutError("partial_trace needs a nonempty set of kept labels")
    for label in keep:
        layout.index(label)
    m = np.asarray(m)
    if m.shape != (layout.dim, layout.dim):
        raise LayoutError(f"matrix of shape {m.shape} does not fit layout of dimension {layout.dim}")
    n = len(layout)
    kept = [i for i, label in enumerate(layout.labels) if label in keep]
    traced = [i for i in range(n) if i not in kept]
    dk = int(np.prod([layout.dims[i] for i in kept]))
    dt = int(np.prod([layout.dims[i] for i in traced])) if traced else 1
    t = m.reshape(layout.dims * 2)
    t = t.transpose(kept + traced + [n + i for i in kept] + [n + i for i in traced])
    return np.einsum("ajbj->ab", t.reshape(dk, dt, dk, dt))


def outer_partial_trace(left: StateVector, right: StateVector, keep: Iterable[str]) -> np.ndarray:
    """``partial_trace(|left><right|, keep)`` computed from the vectors alone.

    Avoids materializing the full outer product, which matters for layouts with
    many environment qubits.
    """
    if left.layout != right.layout:
        raise LayoutError("outer_partial_trace needs vectors on one layout")
    layout = left.layout
    keep = set(keep)
    if not keep:
        raise LayoutError("partial trace needs a nonempty set of kept labels")
    kept = [layout.index(label) for label in layout.labels if label in keep]
    for label in keep:
        layout.index(label)
    traced = [i for i in range(len(layout)) if i not in kept]
    dk = int(np.prod([layout.dims[i] for i in kept]))

    def as_matrix(v: StateVector) -> np.ndarray:
        return v.tensor().transpose(kept + traced).reshape(dk, -1)

    return as_matrix(left) @ as_matrix(right).conj().T


def random_state(layout: SystemLayout, rng: np.random.Generator) -> StateVector:
    """Haar-random normalized state."""
    z = rng.standard_normal(layout.dim) + 1j * rng.standard_normal(layout.dim)
    return StateVector(layout, z / np.linalg.norm(z))


def random_unitary(layout: SystemLayout, rng: np.random.Generator) -> OperatorMatrix:
    """Haar-random unitary via QR with the phase correction."""
    n = layout.dim
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return OperatorMatrix(layout, q * (d / np.abs(d)))
