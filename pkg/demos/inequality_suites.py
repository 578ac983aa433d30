"""Randomized checks of the Gram-determinant inequalities behind local nondeterminism.

Prints the worst margin of each suite; a negative margin beyond tolerance
would come with a JSON witness.

    python3 demos/inequality_suites.py [--seed 0] [--trials 100]
"""

import argparse

from gausslt.lemmas import run_verify_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=100)
    args = ap.parse_args()
    for r in run_verify_suite(args.seed, trials=args.trials):
        print(r.summary())
        if not r.passed:
            print(r.witness_json())


if __name__ == "__main__":
    main()
