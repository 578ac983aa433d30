"""Local time of standard Brownian motion.

Simulates Wiener paths, compares the kernel local time at zero with its
exact mean, and checks the mean-square self-overlap against the closed
form 8 / (3 sqrt(2 pi)).

    python3 demos/wiener_local_time.py [--grid 1024] [--reps 500] [--seed 0]
"""

import argparse
import math

import numpy as np

from gausslt import builtin_operator, make_grid
from gausslt.localtime import (mc_local_time, mc_selfoverlap, occupation_density, second_moment_exact,
                               selfoverlap_expectation)
from gausslt.sim import integrator_path, sample_noise


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=1024)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--eps", type=float, default=4e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    A = builtin_operator("identity", make_grid(args.grid))
    t = A.grid.nodes[:-1]

    mean, se = mc_local_time(A, 0.0, 1.0, args.eps, args.reps, args.seed)
    kernel_mean = A.grid.h * np.sum(1 / np.sqrt(2 * math.pi * (t + args.eps)))
    print(f"l(0,1): MC {mean:.4f} +- {se:.4f}; kernel mean {kernel_mean:.4f}; eps -> 0 limit {math.sqrt(2 / math.pi):.4f}")

    x = integrator_path(A, sample_noise(A.grid, args.seed))
    dens = occupation_density(x)
    print(f"one path: occupation density integrates to {dens.mass:.6f} over {len(dens.values)} bins")

    exact = second_moment_exact(builtin_operator("identity", make_grid(min(args.grid, 1024))))
    m2, se2 = mc_selfoverlap(A, args.eps, args.reps, args.seed)
    print(f"E int l^2 du: exact {exact.value:.6f} (closed form {8 / (3 * math.sqrt(2 * math.pi)):.6f})")
    print(f"  MC {m2:.4f} +- {se2:.4f}; estimator mean with kernel bias {selfoverlap_expectation(A, args.eps):.4f}")


if __name__ == "__main__":
    main()
