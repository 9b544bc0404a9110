"""Forward and backward reduction error against kappa = cos(2 theta)^N."""

import argparse
import math

from twotime.experiments import IdealMeasurementConfig, backward_reduction, decoherence_scaling


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-values", type=int, nargs="+", default=[2, 4, 6, 8, 10, 12])
    p.add_argument("--theta", type=float, default=math.pi / 8)
    args = p.parse_args()

    rows, slope = decoherence_scaling(args.n_values, args.theta)
    print(f"{'N':>3} {'kappa':>12} {'forward':>12} {'backward':>12} {'fidelity':>10}")
    for r in rows:
        back = backward_reduction(IdealMeasurementConfig(n_env=r["n_env"], theta=args.theta))
        print(f"{r['n_env']:>3} {r['kappa']:>12.4e} {r['target_distance']:>12.4e} "
              f"{back.target_distance:>12.4e} {back.device_fidelity:>10.6f}")
    print(f"log-log slope of forward distance vs kappa: {slope:.4f}")


if __name__ == "__main__":
    main()
