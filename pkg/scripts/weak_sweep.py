"""Post-selected pointer mean against pointer width for the A_w = 3 configuration."""

import argparse

from twotime.weak import WeakConfig, weakness_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sigmas", type=float, nargs="+", default=[1.6, 4, 8, 16, 32, 64, 128, 256])
    p.add_argument("--m-points", type=int, default=4096)
    args = p.parse_args()

    cfg = WeakConfig(m_points=args.m_points)
    print(f"eigenvalues {cfg.eigenvalues}, Re A_w = {cfg.weak_value().real:g}, <A> = {cfg.expectation():.3g}")
    print(f"{'sigma':>8} {'mean':>10} {'reading':>10} {'|error|':>10} {'success':>9}  regime")
    for r in weakness_sweep(cfg, args.sigmas):
        regime = "strong" if r.strong else "weak"
        print(f"{r.sigma:>8g} {r.pointer_mean:>10.4f} {r.two_state_reading:>10.4f} "
              f"{r.abs_error:>10.4f} {r.success_prob:>9.5f}  {regime}")


if __name__ == "__main__":
    main()
