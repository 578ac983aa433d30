"""Local times converge when the generating operators converge.

For A_n = I + K/n with a Volterra operator K, the exact mean-square
distance E int (l_n - l)^2 du between the local times of the integrators
of A_n and of the identity falls like 1/n; the scaled family (1 + 1/n) I
is shown alongside.

    python3 demos/operator_convergence.py [--grid 256]
"""

import argparse

import numpy as np

from gausslt import builtin_operator, make_grid
from gausslt.config import ExperimentConfig, operator_sequence
from gausslt.localtime import convergence_table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=256)
    ap.add_argument("--kernel", default="exp")
    args = ap.parse_args()

    g = make_grid(args.grid)
    ident = builtin_operator("identity", g)
    ns = [1, 2, 4, 8, 16, 32, 64]
    for family in ("perturbation", "scaled"):
        seq = operator_sequence(ExperimentConfig(command="lt-converge", family=family, kernel=args.kernel), g)
        rows = convergence_table(seq, ident, ns)
        print(f"family {family}:")
        print(f"  {'n':>3} {'E int (l_n - l)^2':>18} {'err est':>9} {'|A_n^-1|':>9}")
        for r in rows:
            print(f"  {r['n']:>3} {r['value']:>18.6g} {r['error_estimate']:>9.1e} {r['inverse_norm']:>9.4f}")
        v = np.array([r["value"] for r in rows])
        slope = np.polyfit(np.log(ns[-3:]), np.log(v[-3:]), 1)[0]
        print(f"  log-log slope over the last three n: {slope:.3f}")


if __name__ == "__main__":
    main()
