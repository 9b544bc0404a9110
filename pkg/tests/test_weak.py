import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twotime.errors import (
    EmptyPostSelectionError,
    ForbiddenTwoStateError,
    GridTooSmallError,
    IncompleteBasisError,
    QuantizationError,
)
from twotime.hilbert import StateVector, SystemLayout, random_state, random_unitary, tensor_state
from twotime.twostate import ObservableSpec, reduce_two_state
from twotime.weak import (
    POINTER,
    PointerGrid,
    PointerWavefunction,
    WeakConfig,
    complete_postselection_check,
    couple,
    gaussian_pointer,
    pointer_mean,
    pointer_two_state_reading,
    pointer_variance,
    post_select,
    weak_coupling_unitary,
    weak_two_state,
    weakness_sweep,
)

SYS = SystemLayout.of(("system", 2))


def sz(a=8.0):
    return ObservableSpec.computational(SYS, [a, -a])


def aw3_mean(sigma):
    # pointer ∝ 2 Q(8) - Q(-8); the cross term is symmetric about 0 and <Q(8)|Q(-8)> = exp(-32/sigma^2)
    return 24 / (5 - 4 * math.exp(-32 / sigma**2))


# grid and pointer


def test_grid_positions_and_length():
    g = PointerGrid(16, 0.5)
    assert g.origin == -4.0
    assert g.positions[0] == -4.0 and g.positions[-1] == 3.5
    assert g.length == 8.0


def test_grid_rejects_bad_parameters():
    with pytest.raises(ValueError):
        PointerGrid(1)
    with pytest.raises(ValueError):
        PointerGrid(8, 0.0)


def test_gaussian_mean_is_zero():
    p = gaussian_pointer(PointerGrid(1024), 0.0, 20.0)
    assert abs(pointer_mean(p)) < 1e-10
    assert abs(p.norm - 1) < 1e-12


@pytest.mark.parametrize("sigma", [4.0, 8.0, 16.0, 33.3])
def test_gaussian_variance(sigma):
    g = PointerGrid(1024)
    p = gaussian_pointer(g, 0.0, sigma)
    # independent discrete sum of the squared amplitude profile
    q = g.positions
    w = np.exp(-(q**2) / (2 * sigma**2))
    var = np.sum(q**2 * w) / np.sum(w)
    assert pointer_variance(p) == pytest.approx(var, rel=1e-12)
    assert abs(var - sigma**2) <= 0.02 * sigma**2


def test_gaussian_separated_overlap():
    g, sigma = PointerGrid(2048), 10.0
    left, right = gaussian_pointer(g, -60.0, sigma), gaussian_pointer(g, 60.0, sigma)
    overlap = abs(np.vdot(left.amplitudes, right.amplitudes))
    # amplitude overlap of two width-sigma profiles 12 sigma apart is exp(-144/8)
    assert overlap == pytest.approx(math.exp(-18), rel=1e-9)
    assert overlap**2 <= 1e-15


def test_gaussian_grid_errors():
    g = PointerGrid(128)
    with pytest.raises(GridTooSmallError):
        gaussian_pointer(g, 0.0, 1.0)
    with pytest.raises(GridTooSmallError):
        gaussian_pointer(g, 0.0, 20.0)
    with pytest.raises(GridTooSmallError):
        gaussian_pointer(g, 500.0, 2.0)
    with pytest.raises(GridTooSmallError):
        gaussian_pointer(g, 40.0, 6.0)


def test_pointer_mean_of_shifted_gaussian():
    g = PointerGrid(1024)
    for a in (-37.0, 0.0, 12.0, 100.0):
        assert abs(pointer_mean(gaussian_pointer(g, a, 9.0)) - a) < g.spacing / 100


# coupling


def _loop_shift_matrix(projectors, shifts, m):
    """Explicit index loop for sum_k P_k (x) S^{m_k}."""
    d = projectors[0].shape[0]
    u = np.zeros((d * m, d * m), dtype=complex)
    for p, s in zip(projectors, shifts):
        for i in range(d):
            for j in range(d):
                for q in range(m):
                    u[i * m + (q + s) % m, j * m + q] += p[i, j]
    return u


def test_coupling_matches_loop_oracle(rng):
    g = PointerGrid(16, 0.5)
    v = random_unitary(SystemLayout.of(("system", 3)), rng).entries
    obs = ObservableSpec.from_basis(SystemLayout.of(("system", 3)), [1.0, -0.5, 2.5], v.T)
    u = weak_coupling_unitary(obs, g)
    assert u.shifts == (2, -1, 5)
    expected = _loop_shift_matrix([p.entries for p in obs.projectors], u.shifts, 16)
    assert np.max(np.abs(u.matrix() - expected)) < 1e-12
    psi = random_state(u.layout, rng)
    assert np.allclose(u.apply_to(psi).amplitudes, expected @ psi.amplitudes, atol=1e-12)


def test_coupling_is_exact_permutation_for_computational_basis():
    u = weak_coupling_unitary(sz(3.0), PointerGrid(32))
    m = u.matrix()
    assert set(np.unique(m.real)) <= {0.0, 1.0}
    assert np.max(np.abs(m.conj().T @ m - np.eye(64))) == 0.0
    assert u.unitarity_error() == 0.0


def test_zero_coupling_is_identity():
    # eigenvalues must be distinct: zero shift on one eigenspace, a full-grid shift on the other
    g = PointerGrid(8)
    obs = ObservableSpec.computational(SYS, [0.0, 8.0])
    assert np.max(np.abs(weak_coupling_unitary(obs, g).matrix() - np.eye(16))) == 0.0


def test_eigenstate_input_moves_pointer():
    g, sigma = PointerGrid(512), 10.0
    obs = sz(8.0)
    out = couple(StateVector.basis(SYS, 0), obs, g, sigma)
    expected = tensor_state([StateVector.basis(SYS, 0), gaussian_pointer(g, 8.0, sigma).as_state()])
    assert np.allclose(out.amplitudes, expected.amplitudes, atol=1e-14)


def test_coupling_round_trip(rng):
    g = PointerGrid(64)
    u = weak_coupling_unitary(sz(5.0), g)
    psi = random_state(u.layout, rng)
    back = u.inverse().apply_to(u.apply_to(psi))
    assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < 1e-12


def test_quantization_error_names_eigenvalue():
    with pytest.raises(QuantizationError, match="2.5"):
        weak_coupling_unitary(ObservableSpec.computational(SYS, [2.5, 0.0]), PointerGrid(16))


# post-selection


def test_post_select_eigenstate_gives_shifted_pointer():
    g = PointerGrid(512)
    phi1 = StateVector(SYS, [0.6, 0.8])
    for sigma in (2.0, 30.0):
        pointer, success = post_select(couple(phi1, sz(), g, sigma), StateVector.basis(SYS, 1), g)
        exact = np.roll(gaussian_pointer(g, 0.0, sigma).amplitudes, -8)
        assert np.allclose(pointer.amplitudes, exact, atol=1e-14)
        # periodic wraparound differs from a freshly centred profile only in the negligible edge tail
        assert np.allclose(pointer.amplitudes, gaussian_pointer(g, -8.0, sigma).amplitudes, atol=1e-8)
        assert success == pytest.approx(0.64, abs=1e-14)


def test_post_select_matches_displayed_sum():
    g, sigma = PointerGrid(1024), 12.0
    phi1 = StateVector(SYS, [0.6, 0.8j])
    phi2 = StateVector(SYS, [1 / math.sqrt(3), math.sqrt(2 / 3)])
    pointer, _ = post_select(couple(phi1, sz(), g, sigma), phi2, g)
    terms = [c * cf.conjugate() * gaussian_pointer(g, a, sigma).amplitudes for c, cf, a in zip(phi1.amplitudes, phi2.amplitudes, (8.0, -8.0))]
    expected = sum(terms)
    expected /= np.linalg.norm(expected)
    assert np.allclose(pointer.amplitudes, expected, atol=1e-13)


def test_post_select_aw3_case():
    cfg = WeakConfig()
    assert cfg.weak_value() == pytest.approx(24.0)
    phi1, phi2 = cfg.states()
    pointer, _ = post_select(couple(phi1, cfg.observable(), cfg.grid, 64.0), phi2, cfg.grid)
    assert abs(pointer_mean(pointer) - 24.0) <= 0.1 * cfg.spread
    assert pointer_mean(pointer) == pytest.approx(aw3_mean(64.0), abs=1e-9)


def test_post_select_success_sums_to_one(rng):
    g = PointerGrid(256)
    phi1 = random_state(SYS, rng)
    composite = couple(phi1, sz(), g, 6.0)
    basis = random_unitary(SYS, rng).entries.T
    total = sum(post_select(composite, StateVector(SYS, v), g)[1] for v in basis)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_empty_post_selection():
    g = PointerGrid(256)
    composite = couple(StateVector.basis(SYS, 0), sz(), g, 6.0)
    with pytest.raises(EmptyPostSelectionError):
        post_select(composite, StateVector.basis(SYS, 1), g)


# two-state reading


def test_reading_uses_pointer_diagonal():
    g, sigma = PointerGrid(64), 4.0
    obs = sz(4.0)
    phi1, phi2 = StateVector(SYS, [0.6, 0.8]), StateVector(SYS, [0.8, 0.6])
    ts = weak_two_state(phi1, phi2, obs, g, sigma)
    rho = reduce_two_state(ts, {POINTER}).matrix
    assert pointer_two_state_reading(ts, g) == pytest.approx(np.real(np.dot(g.positions, np.diag(rho))), abs=1e-12)


def test_reading_equals_expectation_without_post_selection():
    cfg = WeakConfig(phi2=WeakConfig().phi1)
    phi1, _ = cfg.states()
    ts = weak_two_state(phi1, phi1, cfg.observable(), cfg.grid, 64.0)
    reading = pointer_two_state_reading(ts, cfg.grid)
    assert abs(reading - cfg.expectation()) < cfg.grid.spacing


def test_reading_aw3_case():
    cfg = WeakConfig()
    phi1, phi2 = cfg.states()
    reading = pointer_two_state_reading(weak_two_state(phi1, phi2, cfg.observable(), cfg.grid, 64.0), cfg.grid)
    assert abs(reading - 24.0) <= 0.1 * 24.0
    assert reading == pytest.approx(aw3_mean(64.0), abs=1e-9)


def test_reading_single_eigenstate():
    g = PointerGrid(512)
    e = StateVector.basis(SYS, 0)
    reading = pointer_two_state_reading(weak_two_state(e, e, sz(), g, 3.0), g)
    assert abs(reading - 8.0) < g.spacing / 100


def test_reading_forbidden_pair():
    g = PointerGrid(512)
    with pytest.raises(ForbiddenTwoStateError):
        weak_two_state(StateVector.basis(SYS, 0), StateVector.basis(SYS, 1), sz(), g, 3.0)


# sweep


def test_sweep_regimes():
    cfg = WeakConfig()
    rows = weakness_sweep(cfg, [1.6, 32.0, 64.0, 128.0, 256.0])
    assert rows[0].strong and not rows[-1].strong
    assert rows[0].abs_error > 0.5 * 24.0
    by_sigma = {r.sigma: r for r in rows}
    assert by_sigma[128.0].abs_error <= 0.1 * 24.0
    tail = [r.abs_error for r in rows[-3:]]
    assert tail[0] >= tail[1] >= tail[2]
    for r in rows[1:]:
        assert r.pointer_mean == pytest.approx(aw3_mean(r.sigma), abs=1e-8)


def test_strong_regime_pointer_is_bimodal():
    cfg = WeakConfig()
    phi1, phi2 = cfg.states()
    pointer, _ = post_select(couple(phi1, cfg.observable(), cfg.grid, 1.6), phi2, cfg.grid)
    p = pointer.probabilities()
    q = cfg.grid.positions
    assert p[q == 8.0][0] > 100 * p[q == 0.0][0]
    assert p[q == -8.0][0] > 100 * p[q == 0.0][0]


def test_sweep_order_independent_of_workers():
    cfg = WeakConfig(m_points=1024)
    sig = [40.0, 8.0, 20.0, 60.0]
    assert weakness_sweep(cfg, sig, workers=1) == weakness_sweep(cfg, sig, workers=3)


# complete post-selection


def test_complete_postselection_computational_mixture():
    g, sigma = PointerGrid(512), 5.0
    phi1 = StateVector(SYS, [0.6, 0.8])
    assert complete_postselection_check(phi1, sz(), g, sigma, np.eye(2)) <= 1e-10
    composite = couple(phi1, sz(), g, sigma)
    unselected = np.sum(np.abs(composite.amplitudes.reshape(2, -1)) ** 2, axis=0)
    mixture = 0.36 * gaussian_pointer(g, 8.0, sigma).probabilities() + 0.64 * gaussian_pointer(g, -8.0, sigma).probabilities()
    assert np.sum(np.abs(unselected - mixture)) < 1e-13


def test_complete_postselection_eigenstate_input():
    g = PointerGrid(256)
    assert complete_postselection_check(StateVector.basis(SYS, 0), sz(), g, 5.0, np.eye(2)) <= 1e-12


def test_incomplete_basis_rejected():
    with pytest.raises(IncompleteBasisError):
        complete_postselection_check(StateVector.basis(SYS, 0), sz(), PointerGrid(256), 5.0, [[1, 0]])
    with pytest.raises(IncompleteBasisError):
        complete_postselection_check(StateVector.basis(SYS, 0), sz(), PointerGrid(256), 5.0, [[1, 0], [1, 1]])


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(2, 4), seed=st.integers(0, 2**32 - 1), sigma=st.floats(2.0, 12.0))
def test_complete_postselection_identity(dim, seed, sigma):
    rng = np.random.default_rng(seed)
    layout = SystemLayout.of(("system", dim))
    eig = rng.choice(np.arange(-10, 11), size=dim, replace=False).astype(float)
    obs = ObservableSpec.from_basis(layout, eig, random_unitary(layout, rng).entries.T)
    basis = random_unitary(layout, rng).entries.T
    l1 = complete_postselection_check(random_state(layout, rng), obs, PointerGrid(256), sigma, basis)
    assert l1 <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0))
def test_weak_value_reading_rescaling_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    g = PointerGrid(512)
    phi1, phi2 = random_state(SYS, rng), random_state(SYS, rng)
    base = pointer_two_state_reading(weak_two_state(phi1, phi2, sz(2.0), g, 20.0), g)
    scaled = pointer_two_state_reading(weak_two_state(phi1, phi2.scaled(scale), sz(2.0), g, 20.0), g)
    assert scaled == pytest.approx(base, abs=1e-9)


def test_pointer_wavefunction_length_checked():
    from twotime.errors import LayoutError

    with pytest.raises(LayoutError):
        PointerWavefunction(PointerGrid(8), np.ones(7))
