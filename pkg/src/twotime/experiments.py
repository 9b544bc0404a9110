"""
Prebuilt scenarios: an ideal spin measurement followed by environment
decoherence, its forward and backward two-time reduction, stability of the
reduction under disturbances of the environment, device re-initialization,
and the entangled-pair signalling example.

Subsystems: ``particle`` (spin, index 0 = up), ``device`` (qutrit with basis
R/UP/DOWN, R being the ready state) and environment qubits ``env0`` ...
``env{N-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boundary import ClassicalBasisSpec, decompose_classical_branches, sample_branch
from .errors import BranchInconsistentError, ForbiddenTwoStateError, TwoTimeError
from .hilbert import (
    PAULI_X,
    Circuit,
    OperatorMatrix,
    StateVector,
    SystemLayout,
    apply,
    inner,
    random_state,
    tensor_state,
)
from .twostate import (
    ReducedTwoState,
    TwoState,
    abl_probabilities,
    born_probabilities,
    evolve_two_state,
    make_two_state,
    pauli_z,
    reduce_two_state,
)

PARTICLE = "particle"
DEVICE = "device"
DEVICE_STATES = ("R", "UP", "DOWN")
R, UP, DOWN = 0, 1, 2
SPIN_OF_BRANCH = {"UP": 0, "DOWN": 1}
INTACT_RATIO = 1e-3

# sign of the per-qubit rotation conditioned on each device state
FORWARD_SIGNS = {"R": 0, "UP": +1, "DOWN": -1}
# separates R from both non-ready states (used before the measurement)
READY_SIGNS = {"R": +1, "UP": -1, "DOWN": -1}


def env_labels(n_env: int) -> tuple[str, ...]:
    return tuple(f"env{j}" for j in range(n_env))


def measurement_layout(n_env: int) -> SystemLayout:
    return SystemLayout.of((PARTICLE, 2), (DEVICE, 3), *((label, 2) for label in env_labels(n_env)))


def kappa(n_env: int, theta: float) -> float:
    """Overlap <eps_up|eps_down> = cos(2 theta)^N of the two environment records."""
    return math.cos(2 * theta) ** n_env


def _cycle(mapping: dict[int, int]) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    for src, dst in mapping.items():
        m[dst, src] = 1
    return m


def build_measurement_unitary(particle: str = PARTICLE, device: str = DEVICE) -> OperatorMatrix:
    """Permutation coupling a spin to the device.

    Spin up cycles R -> UP -> DOWN -> R, spin down cycles R -> DOWN -> UP -> R,
    so |up,R> -> |up,UP> and |down,R> -> |down,DOWN>; the inverse sends
    |down,UP> to |down,DOWN>, which plays the role of the state orthogonal to
    READY.
    """
    up_cycle = _cycle({R: UP, UP: DOWN, DOWN: R})
    down_cycle = _cycle({R: DOWN, DOWN: UP, UP: R})
    m = np.kron(np.diag([1, 0]), up_cycle) + np.kron(np.diag([0, 1]), down_cycle)
    return OperatorMatrix(SystemLayout.of((particle, 2), (device, 3)), m)


def _rotation(sign: int, theta: float) -> np.ndarray:
    if sign == 0:
        return np.eye(2, dtype=complex)
    c, s = math.cos(theta), sign * math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def build_decoherence_unitary(
    n_env: int, theta: float, signs: dict[str, int] | None = None, device: str = DEVICE
) -> Circuit:
    """Device-controlled rotations of each environment qubit.

    With the default signs a device in UP turns every env qubit |0> into
    cos(theta)|0> + sin(theta)|1>, DOWN into cos(theta)|0> - sin(theta)|1>, and
    R leaves it alone. Returned as a circuit of one 6x6 gate per qubit.
    """
    if n_env < 1:
        raise ValueError(f"need at least one environment qubit, got {n_env}")
    if not 0 < theta <= math.pi / 4:
        raise ValueError(f"decoherence angle must lie in (0, pi/4], got {theta}")
    signs = FORWARD_SIGNS if signs is None else signs
    gate = sum(
        np.kron(np.diag(np.eye(3)[k]), _rotation(signs[name], theta)) for k, name in enumerate(DEVICE_STATES)
    )
    labels = env_labels(n_env)
    layout = SystemLayout.of((device, 3), *((label, 2) for label in labels))
    gates = tuple(OperatorMatrix(SystemLayout.of((device, 3), (label, 2)), gate) for label in labels)
    return Circuit(layout, gates)


def environment_record(n_env: int, theta: float, branch: str, signs: dict[str, int] | None = None) -> StateVector:
    """Environment state left behind by a device sitting in ``branch``."""
    signs = FORWARD_SIGNS if signs is None else signs
    qubit = _rotation(signs[branch], theta)[:, 0]
    parts = [StateVector(SystemLayout.of((label, 2)), qubit) for label in env_labels(n_env)]
    return tensor_state(parts)


def _device_ket(name: str) -> StateVector:
    return StateVector.basis(SystemLayout.of((DEVICE, 3)), DEVICE_STATES.index(name))


def _spin(amplitudes: Sequence[complex]) -> StateVector:
    return StateVector(SystemLayout.of((PARTICLE, 2)), np.asarray(amplitudes, dtype=complex))


def _env_vacuum(n_env: int) -> StateVector:
    return StateVector.basis(SystemLayout.of(*((label, 2) for label in env_labels(n_env))), 0)


@dataclass(frozen=True)
class IdealMeasurementConfig:
    a: complex = 0.6
    b: complex = 0.8
    n_env: int = 8
    theta: float = math.pi / 8
    final_branch: str = "UP"  # UP | DOWN | sampled
    seed: int = 0
    c: complex = 1 / math.sqrt(2)
    d: complex = 1 / math.sqrt(2)

    def __post_init__(self):
        for name, (x, y) in {"(a, b)": (self.a, self.b), "(c, d)": (self.c, self.d)}.items():
            if abs(abs(x) ** 2 + abs(y) ** 2 - 1) > 1e-12:
                raise ValueError(f"{name} must be normalized, |x|^2+|y|^2 = {abs(x) ** 2 + abs(y) ** 2!r}")
        if self.final_branch not in ("UP", "DOWN", "sampled"):
            raise ValueError(f"final_branch must be UP, DOWN or sampled, got {self.final_branch!r}")
        if self.n_env < 1:
            raise ValueError("n_env must be at least 1")
        if not 0 < self.theta <= math.pi / 4:
            raise ValueError(f"theta must lie in (0, pi/4], got {self.theta}")

    @property
    def kappa(self) -> float:
        return kappa(self.n_env, self.theta)

    @property
    def layout(self) -> SystemLayout:
        return measurement_layout(self.n_env)


def initial_history(cfg: IdealMeasurementConfig) -> StateVector:
    """(a up + b down) (x) R (x) |0...0> at the start of the measurement."""
    return tensor_state([_spin([cfg.a, cfg.b]), _device_ket("R"), _env_vacuum(cfg.n_env)])


def forward_circuit(cfg: IdealMeasurementConfig) -> Circuit:
    """Measurement interaction followed by decoherence."""
    deco = build_decoherence_unitary(cfg.n_env, cfg.theta)
    return Circuit(cfg.layout, (build_measurement_unitary(),) + deco.gates)


def full_circuit(cfg: IdealMeasurementConfig) -> Circuit:
    """Ready-state decoherence, measurement, then decoherence of the outcome."""
    ready = build_decoherence_unitary(cfg.n_env, cfg.theta, READY_SIGNS)
    return Circuit(cfg.layout, ready.gates + forward_circuit(cfg).gates)


def final_branch_decomposition(cfg: IdealMeasurementConfig):
    """Classical branches of the decohered history, device as the classical system."""
    late = apply(forward_circuit(cfg), initial_history(cfg))
    return decompose_classical_branches(late, ClassicalBasisSpec.computational({DEVICE: DEVICE_STATES}))


def choose_branch(cfg: IdealMeasurementConfig) -> str:
    if cfg.final_branch != "sampled":
        return cfg.final_branch
    return sample_branch(final_branch_decomposition(cfg), cfg.seed).names[0]


def final_destiny(cfg: IdealMeasurementConfig, branch: str) -> StateVector:
    """phi (x) branch (x) eps_branch: the destiny vector after decoherence."""
    return tensor_state(
        [_spin([cfg.c, cfg.d]), _device_ket(branch), environment_record(cfg.n_env, cfg.theta, branch)]
    )


def late_two_state(cfg: IdealMeasurementConfig, branch: str | None = None) -> TwoState:
    branch = choose_branch(cfg) if branch is None else branch
    history = apply(forward_circuit(cfg), initial_history(cfg))
    try:
        return make_two_state(history, final_destiny(cfg, branch))
    except ForbiddenTwoStateError as exc:
        raise BranchInconsistentError(exc.overlap, branch) from None


@dataclass(frozen=True, eq=False)
class ReductionReport:
    branch: str
    reduced: ReducedTwoState
    target: np.ndarray
    target_distance: float
    offdiag_norm: float
    kappa: float
    c0_bound: float
    selected_label: str

    @property
    def c0_measured(self) -> float:
        return self.target_distance / self.kappa if self.kappa > 0 else 0.0


@dataclass(frozen=True, eq=False)
class BackwardReport(ReductionReport):
    device_fidelity: float = 1.0
    particle_bra: np.ndarray | None = None


def _spin_amp(cfg: IdealMeasurementConfig, branch: str) -> tuple[complex, complex, complex]:
    """(selected history amplitude, other history amplitude, <phi|selected spin>)."""
    if branch == "UP":
        return cfg.a, cfg.b, complex(cfg.c).conjugate()
    return cfg.b, cfg.a, complex(cfg.d).conjugate()


def run_two_time_measurement(cfg: IdealMeasurementConfig) -> ReductionReport:
    """Reduced two-state of particle and device between decoherence and the next measurement."""
    branch = choose_branch(cfg)
    ts = late_two_state(cfg, branch)
    reduced = reduce_two_state(ts, {PARTICLE, DEVICE})

    spin = np.eye(2)[SPIN_OF_BRANCH[branch]]
    phi = np.array([cfg.c, cfg.d], dtype=complex)
    dev = np.eye(3)[DEVICE_STATES.index(branch)]
    target = np.kron(np.outer(spin, phi.conj()) / np.vdot(phi, spin), np.outer(dev, dev))
    outside = np.kron(np.eye(2), np.eye(3) - np.outer(dev, dev))

    selected, other, phi_overlap = _spin_amp(cfg, branch)
    dev_diag = np.abs(np.diag(np.trace(reduced.matrix.reshape(2, 3, 2, 3), axis1=0, axis2=2)))
    return ReductionReport(
        branch=branch,
        reduced=reduced,
        target=target,
        target_distance=float(np.linalg.norm(reduced.matrix - target)),
        offdiag_norm=float(np.linalg.norm(outside @ reduced.matrix)),
        kappa=cfg.kappa,
        c0_bound=abs(other) / (abs(selected) * abs(phi_overlap)),
        selected_label=DEVICE_STATES[int(np.argmax(dev_diag))],
    )


def backward_reduction(cfg: IdealMeasurementConfig) -> BackwardReport:
    """Reduced two-state before the measurement, from the destiny evolved backwards."""
    branch = choose_branch(cfg)
    late = late_two_state(cfg, branch)
    early = evolve_two_state(late, full_circuit(cfg).inverse())
    reduced = reduce_two_state(early, {PARTICLE, DEVICE})

    psi = np.array([cfg.a, cfg.b], dtype=complex)
    spin = np.eye(2)[SPIN_OF_BRANCH[branch]]
    ready = np.eye(3)[R]
    target = np.kron(np.outer(psi, spin) / np.dot(spin, psi), np.outer(ready, ready))

    keep_ready = np.kron(np.eye(2), np.outer(ready, ready))
    blocks = reduced.matrix.reshape(2, 3, 2, 3)
    rho_device = np.trace(blocks, axis1=0, axis2=2)
    rho_particle = np.trace(blocks, axis1=1, axis2=3)
    column_weight = np.linalg.norm(rho_particle, axis=0)
    selected, _, phi_overlap = _spin_amp(cfg, branch)
    other_phi = abs(cfg.d if branch == "UP" else cfg.c)
    return BackwardReport(
        branch=branch,
        reduced=reduced,
        target=target,
        target_distance=float(np.linalg.norm(reduced.matrix - target)),
        offdiag_norm=float(np.linalg.norm(reduced.matrix - keep_ready @ reduced.matrix @ keep_ready)),
        kappa=cfg.kappa,
        c0_bound=other_phi / (abs(selected) * abs(phi_overlap)),
        selected_label="UP" if int(np.argmax(column_weight)) == 0 else "DOWN",
        device_fidelity=1.0 - float(np.linalg.norm(rho_device - np.outer(ready, ready))),
        particle_bra=column_weight / np.linalg.norm(column_weight),
    )


def decoherence_scaling(
    n_values: Sequence[int], theta: float, a: complex = 0.6, b: complex = 0.8, c: complex = 1 / math.sqrt(2),
    d: complex = 1 / math.sqrt(2), branch: str = "UP",
) -> tuple[list[dict], float]:
    """Forward reduction over several environment sizes plus the log-log slope of distance vs kappa."""
    rows = []
    for n in n_values:
        rep = run_two_time_measurement(IdealMeasurementConfig(a, b, n, theta, branch, 0, c, d))
        rows.append(
            {"n_env": n, "kappa": rep.kappa, "target_distance": rep.target_distance, "offdiag_norm": rep.offdiag_norm}
        )
    k = np.log([r["kappa"] for r in rows])
    dist = np.log([r["target_distance"] for r in rows])
    slope = float(np.polyfit(k, dist, 1)[0]) if len(rows) > 1 else float("nan")
    return rows, slope


@dataclass(frozen=True)
class StabilityReport:
    n_env: int
    theta: float
    n_disturbed: int
    s_same: float
    s_cross: float
    ratio: float
    kappa: float
    kappa_prime: float
    intact: bool


def stability_experiment(n_env: int, theta: float, n_disturbed: int, disturb_seed: int) -> StabilityReport:
    """Project ``n_disturbed`` environment qubits of eps_up onto Haar-random states.

    Compares the disturbed record with both undisturbed records. The
    disturbance draws come from ``default_rng(disturb_seed)`` in qubit order,
    so a fixed seed disturbs the first qubits identically for every N.
    """
    if not 0 <= n_disturbed <= n_env:
        raise TwoTimeError(f"cannot disturb {n_disturbed} of {n_env} environment qubits")
    eps_up = environment_record(n_env, theta, "UP")
    eps_down = environment_record(n_env, theta, "DOWN")
    rng = np.random.default_rng(disturb_seed)
    disturbed = eps_up
    for label in env_labels(n_env)[:n_disturbed]:
        chi = random_state(SystemLayout.of((label, 2)), rng)
        disturbed = apply(OperatorMatrix(chi.layout, chi.projector()), disturbed).normalized()
    s_same = abs(inner(disturbed, eps_up))
    s_cross = abs(inner(disturbed, eps_down))
    ratio = s_cross / s_same
    return StabilityReport(
        n_env=n_env,
        theta=theta,
        n_disturbed=n_disturbed,
        s_same=s_same,
        s_cross=s_cross,
        ratio=ratio,
        kappa=kappa(n_env, theta),
        kappa_prime=math.cos(2 * theta) ** (n_env - n_disturbed),
        intact=ratio < INTACT_RATIO,
    )


@dataclass(frozen=True)
class ReinitReport:
    weights: dict[tuple[str, str], float]
    independent_weights: dict[tuple[str, str], float]
    max_weight_difference: float
    unitarity_error: float
    records_consistent: bool
    device_ready_after_init: bool


def _swap(l1: str, l2: str, dim: int) -> OperatorMatrix:
    m = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            m[j * dim + i, i * dim + j] = 1
    return OperatorMatrix(SystemLayout.of((l1, dim), (l2, dim)), m)


def reinitialization_demo(
    first: Sequence[complex] = (0.6, 0.8), second: Sequence[complex] = (1 / math.sqrt(2), 1 / math.sqrt(2))
) -> ReinitReport:
    """Two measurements with one device, re-initialized by swapping its state into a record."""
    p1, p2 = _spin(first).normalized(), _spin(second).normalized()
    p1 = StateVector(SystemLayout.of(("p1", 2)), p1.amplitudes)
    p2 = StateVector(SystemLayout.of(("p2", 2)), p2.amplitudes)
    ready = lambda label: StateVector.basis(SystemLayout.of((label, 3)), R)  # noqa: E731

    shared_in = tensor_state([p1, p2, ready(DEVICE), ready("record")])
    shared = Circuit(
        shared_in.layout,
        (build_measurement_unitary("p1", DEVICE), _swap(DEVICE, "record", 3), build_measurement_unitary("p2", DEVICE)),
    )
    mid = apply(Circuit(shared.layout, shared.gates[:2]), shared_in)
    device_after_init = reduce_two_state(make_two_state(mid, mid), {DEVICE}).matrix
    device_ready = bool(abs(device_after_init[R, R] - 1) < 1e-12)
    shared_out = apply(shared, shared_in)
    spec = ClassicalBasisSpec.computational({"record": DEVICE_STATES, DEVICE: DEVICE_STATES})
    decomp = decompose_classical_branches(shared_out, spec)

    indep_in = tensor_state([p1, p2, ready("dev1"), ready("dev2")])
    indep = Circuit(indep_in.layout, (build_measurement_unitary("p1", "dev1"), build_measurement_unitary("p2", "dev2")))
    indep_decomp = decompose_classical_branches(
        apply(indep, indep_in), ClassicalBasisSpec.computational({"dev1": DEVICE_STATES, "dev2": DEVICE_STATES})
    )

    weights = {b.names: b.weight for b in decomp.branches}
    indep_weights = {b.names: b.weight for b in indep_decomp.branches}
    keys = set(weights) | set(indep_weights)
    diff = max(abs(weights.get(k, 0.0) - indep_weights.get(k, 0.0)) for k in keys)

    consistent = True
    for b in decomp.branches:
        for label, name in (("p1", b.names[0]), ("p2", b.names[1])):
            probs = born_probabilities(b.state, pauli_z(label))
            if abs(probs[SPIN_OF_BRANCH[name]] - 1) > 1e-12:
                consistent = False

    return ReinitReport(
        weights=weights,
        independent_weights=indep_weights,
        max_weight_difference=diff,
        unitarity_error=float(np.max(np.abs(shared.matrix().conj().T @ shared.matrix() - np.eye(shared.layout.dim)))),
        records_consistent=consistent,
        device_ready_after_init=device_ready,
    )


def signalling_demo(alice_acts: bool, boundary: str = "special") -> np.ndarray:
    """Bob's outcome probabilities (up, down) for the entangled-pair example.

    ``boundary="special"`` post-selects on (up_A up_B + up_A down_B)/sqrt2;
    ``"trivial"`` uses the initial state itself (no evolution), i.e. no
    foreknowledge of the final state.
    """
    s = 1 / math.sqrt(2)
    layout = SystemLayout.qubits("A", "B")
    psi_i = StateVector(layout, [s, 0, 0, s])
    if alice_acts:
        psi_i = apply(OperatorMatrix(SystemLayout.qubits("A"), PAULI_X), psi_i)
    if boundary == "special":
        psi_f = StateVector(layout, [s, s, 0, 0])
    elif boundary == "trivial":
        psi_f = psi_i
    else:
        raise ValueError(f"boundary must be 'special' or 'trivial', got {boundary!r}")
    return abl_probabilities(psi_i, psi_f, pauli_z("B"))
