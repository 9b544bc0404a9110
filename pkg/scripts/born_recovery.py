"""Sample final boundary conditions for a spin measurement and compare outcome frequencies with Born."""

import argparse

from twotime.boundary import ClassicalBasisSpec, born_recovery
from twotime.experiments import DEVICE, DEVICE_STATES, PARTICLE, IdealMeasurementConfig, forward_circuit, initial_history
from twotime.twostate import pauli_z


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--a", type=float, default=0.6)
    p.add_argument("--b", type=float, default=0.8)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = IdealMeasurementConfig(a=args.a, b=args.b, n_env=4)
    rep = born_recovery(
        initial_history(cfg), forward_circuit(cfg), ClassicalBasisSpec.computational({DEVICE: DEVICE_STATES}),
        pauli_z(PARTICLE), args.runs, args.seed,
    )
    for name, f, b, z in zip(("up", "down"), rep.frequencies, rep.born, rep.z_scores):
        print(f"{name:>5}: frequency {f:.5f}  born {b:.5f}  z {z:+.2f}")
    print(f"runs with an indefinite outcome: {rep.indefinite_runs}")


if __name__ == "__main__":
    main()
