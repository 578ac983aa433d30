"""Self-intersections of Brownian motion conditioned on its endpoint.

In one dimension the mean self-intersection local time given w(1) = a
decays like 1/|a|.  In the plane, counting only pairs of times at least
|a|^-alpha apart, the mean tends to 0, to E1(1/2)/(2 pi) or to infinity
according as alpha < 2, alpha = 2 or alpha > 2.

    python3 demos/self_intersections.py [--mc-reps 300]
"""

import argparse

import numpy as np

from gausslt.selfx import (bridge_selfx_moment, classify_limit, endpoint_decay_certificate, mc_bridge_selfx,
                           planar_limit_constant, planar_selfx_direct, planar_selfx_moment)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mc-reps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    a = np.geomspace(10, 1000, 7)
    v = np.array([bridge_selfx_moment(x) for x in a])
    print("1D:  a      E T  a * E T")
    for x, y in zip(a, v):
        print(f"  {x:8.1f} {y:.6f} {x * y:.5f}")
    print(f"  log-log slope {np.polyfit(np.log(a), np.log(v), 1)[0]:.4f}")
    for beta in (0.9, 1.2):
        print(f"  decay certificate beta={beta}: {endpoint_decay_certificate(1, [10, 1000], beta).summary()}")

    print(f"\nplanar limit at alpha = 2: {planar_limit_constant():.7f}")
    for alpha in (1.5, 2.0, 3.0):
        verdict = classify_limit(alpha, [10, 100, 1000, 10000])
        vals = ", ".join(f"{planar_selfx_moment(x, alpha):.4g}" for x in (10, 100, 1000, 10000))
        print(f"  alpha={alpha}: {vals} -> {verdict}")

    if args.mc_reps:
        mean, se = mc_bridge_selfx([3.0, 0.0], 1, 1e-3, args.mc_reps, 2, 2.0, 512, args.seed)
        print(f"\n|a|=3, alpha=2: MC {mean:.4f} +- {se:.4f}; reduced {planar_selfx_moment(3, 2):.4f}; "
              f"2D quadrature {planar_selfx_direct(3, 2):.4f}")


if __name__ == "__main__":
    main()
