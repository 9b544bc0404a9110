import numpy as np
import pytest

from twotime.hilbert import StateVector, SystemLayout


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def qubit(label="q"):
    return SystemLayout.of((label, 2))


def ket(layout, *amps):
    return StateVector(layout, np.asarray(amps, dtype=complex))


def nested_loop_partial_trace(m, dims, keep):
    """Index-summation oracle: explicit loops over every composite index."""
    n = len(dims)
    kept = [i for i in range(n) if i in keep]
    total = int(np.prod(dims))
    dk = int(np.prod([dims[i] for i in kept]))
    out = np.zeros((dk, dk), dtype=complex)

    def digits(idx):
        ds = []
        for d in reversed(dims):
            ds.append(idx % d)
            idx //= d
        return ds[::-1]

    def sub_index(ds):
        idx = 0
        for i in kept:
            idx = idx * dims[i] + ds[i]
        return idx

    for r in range(total):
        dr = digits(r)
        for c in range(total):
            dc = digits(c)
            if all(dr[i] == dc[i] for i in range(n) if i not in kept):
                out[sub_index(dr), sub_index(dc)] += m[r, c]
    return out


def sequential_measurement_oracle(psi_i, psi_f, projectors, shots, rng):
    """Brute-force pre/post-selection: measure, collapse, then post-select.

    Each shot draws an outcome k with Born probability p_k, collapses to
    P_k|i>/sqrt(p_k), and survives post-selection with probability
    |<f|collapsed>|^2. Returns (counts among survivors, number of survivors).
    """
    i = psi_i / np.linalg.norm(psi_i)
    f = psi_f / np.linalg.norm(psi_f)
    collapsed = [p @ i for p in projectors]
    born = np.array([np.vdot(c, c).real for c in collapsed])
    keep_prob = np.array(
        [abs(np.vdot(f, c)) ** 2 / b if b > 0 else 0.0 for c, b in zip(collapsed, born)]
    )
    outcomes = rng.choice(len(born), size=shots, p=born / born.sum())
    survived = rng.random(shots) < keep_prob[outcomes]
    counts = np.bincount(outcomes[survived], minlength=len(born))
    return counts, int(survived.sum())


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
