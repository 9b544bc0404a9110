"""Cross/same overlap ratio of a disturbed environment record over N and disturbance seeds."""

import argparse
import math

import numpy as np

from twotime.experiments import INTACT_RATIO, stability_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--theta", type=float, default=math.pi / 8)
    p.add_argument("--n-disturbed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=2000)
    args = p.parse_args()

    print(f"{'N':>3} {'median ratio':>13} {'intact fraction':>16}")
    for n in range(max(4, args.n_disturbed), 13):
        ratios = np.array([stability_experiment(n, args.theta, args.n_disturbed, s).ratio for s in range(args.seeds)])
        print(f"{n:>3} {np.median(ratios):>13.4e} {np.mean(ratios < INTACT_RATIO):>16.4f}")


if __name__ == "__main__":
    main()
