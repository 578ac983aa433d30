"""Randomized suites for the Hilbert-space inequalities.

Each suite draws its trials from per-trial RNG streams
``(seed, trial, suite_id)``, so the merged report does not depend on the
number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .gram import (VerifyReport, check_delta_product_identity, check_density_bound,
                   check_gram_lower_bound, check_inverse_gram_quadratic, check_projection_transfer,
                   check_singularity_integrability, indicator_gram_bound, merge_reports,
                   singularity_majorant, synthesize_matching_pair)
from .hilbert import L2Operator, L2Vec, indicator, make_grid
from .sim import rng_stream

__all__ = [
    "random_operator",
    "SUITES",
    "run_suite",
    "run_verify_suite",
]


def random_operator(rng: np.random.Generator, n: int, max_cond: float = 1e3) -> L2Operator:
    """``U diag(s) V^T`` on an ``n``-cell grid with condition number at most ``max_cond``."""
    grid = make_grid(n)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    cond = np.exp(rng.uniform(0.0, np.log(max_cond)))
    s = np.exp(rng.uniform(0.0, np.log(cond), n))
    s[0], s[-1] = 1.0, cond
    s *= np.exp(rng.uniform(-1.0, 1.0))
    return L2Operator(grid, (U * s) @ V.T, label="random")


def _random_family(rng, grid, k):
    if rng.random() < 0.3:
        cuts = np.sort(rng.choice(np.arange(1, grid.n_cells + 1), size=k, replace=False))
        return [indicator(grid, 0.0, c * grid.h) for c in cuts]
    return [L2Vec(grid, rng.standard_normal(grid.n_cells)) for _ in range(k)]


def _trial_gram_lower_bound(rng):
    n = int(rng.integers(2, 17))
    A = random_operator(rng, n)
    k = int(rng.integers(1, min(6, n) + 1))
    return check_gram_lower_bound(A, _random_family(rng, A.grid, k))


def _trial_inverse_gram_quadratic(rng):
    n_vec = int(rng.integers(1, 7))
    if rng.random() < 0.5:
        # indicators of nested intervals: disjoint increments
        n = int(rng.integers(max(n_vec, 2), 33))
        A = random_operator(rng, n, 1e2)
        cuts = np.sort(rng.choice(np.arange(1, n + 1), size=n_vec, replace=False))
        es = [indicator(A.grid, 0.0, c * A.grid.h) for c in cuts]
    else:
        n = int(rng.integers(max(n_vec, 2), 17))
        A = random_operator(rng, n, 1e2)
        Qm, _ = np.linalg.qr(rng.standard_normal((n, n_vec)))
        incs = Qm.T * np.exp(rng.uniform(-1, 1, n_vec))[:, None]
        es = [L2Vec(A.grid, c) for c in np.cumsum(incs, axis=0)]
    return check_inverse_gram_quadratic(A, es, rng.standard_normal(n_vec))


def _trial_density_bound(rng):
    n = int(rng.choice([16, 32]))
    A = random_operator(rng, n, 30.0)
    k = int(rng.integers(1, 5))
    idx = np.sort(rng.choice(np.arange(1, n + 1), size=k, replace=False))
    us = rng.standard_normal(k) * rng.uniform(0.1, 2.0)
    return check_density_bound(A, idx * A.grid.h, us)


def _trial_projection_transfer(rng):
    n = int(rng.integers(3, 17))
    grid = make_grid(n)
    m = int(rng.integers(1, n - 1))
    W, _ = np.linalg.qr(rng.standard_normal((n, m)))
    Q = L2Operator(grid, np.eye(n) - W @ W.T, label="random_projection")
    k = int(rng.integers(1, n - m + 1))
    es = [L2Vec(grid, rng.standard_normal(n)) for _ in range(k)]
    g = L2Vec(grid, rng.standard_normal(n))
    f = synthesize_matching_pair(Q, es, g)
    return check_projection_transfer(Q, es, f, g)


def _trial_indicator_gram(rng):
    grid = make_grid(128)
    k = int(rng.integers(1, 7))
    sets = []
    for _ in range(k):
        mask = np.zeros(128)
        for _ in range(int(rng.integers(1, 3))):
            a, b = np.sort(rng.choice(129, size=2, replace=False))
            mask[a:b] = 1.0
        sets.append(L2Vec(grid, mask))
    return indicator_gram_bound(sets)


def _trial_delta_product(rng):
    n = int(rng.integers(2, 9))
    grid = make_grid(int(rng.integers(max(n, 8), 33)))
    fs = _random_family(rng, grid, n)
    hs = [L2Vec(grid, rng.standard_normal(grid.n_cells) * rng.uniform(0.1, 2.0)) for _ in range(20)]
    return check_delta_product_identity(fs, hs)


def _trial_singularity(rng):
    alpha = float(rng.uniform(0.0, 0.9))
    grid = make_grid(64)
    t = rng.uniform(0.0, 1.0)
    y = indicator(grid, 0.0, t) + L2Vec(grid, 0.3 * rng.standard_normal(64) * rng.uniform(0, 1))
    value = check_singularity_integrability(y, alpha)
    _, maj = singularity_majorant(alpha)
    return VerifyReport.from_margin("singularity_integrability", (maj - value) / maj, 0.0,
                                    {"alpha": alpha, "value": value, "majorant": maj, "y": y.coeffs})


#: name -> (trial function, trial count, stream id)
SUITES: dict[str, tuple[Callable, int, int]] = {
    "gram_lower_bound": (_trial_gram_lower_bound, 1000, 1),
    "inverse_gram_quadratic": (_trial_inverse_gram_quadratic, 500, 2),
    "density_bound": (_trial_density_bound, 200, 3),
    "projection_transfer": (_trial_projection_transfer, 1000, 5),
    "indicator_gram_bound": (_trial_indicator_gram, 1000, 6),
    "delta_product_identity": (_trial_delta_product, 500, 7),
    "singularity_integrability": (_trial_singularity, 200, 4),
}


def run_suite(name: str, seed: int, trials: int | None = None, workers: int = 1) -> VerifyReport:
    fn, default, sid = SUITES[name]
    trials = default if trials is None else trials

    def one(i):
        return fn(rng_stream(seed, i, sid))

    if workers <= 1:
        reports = [one(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, range(trials)))
    return merge_reports(reports, name=name, seed=seed)


def run_verify_suite(seed: int, workers: int = 1, trials: int | None = None) -> list[VerifyReport]:
    """All suites in a fixed order at their default trial counts."""
    return [run_suite(name, seed, trials, workers) for name in SUITES]
