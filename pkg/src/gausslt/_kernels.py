"""Compiled Gaussian pair sums over path samples.

Pairs are enumerated in sorted-value order and pairs further apart than
``cutoff`` are skipped; with the default ``cutoff = 9 sqrt(eps)`` a skipped
term is below ``exp(-40.5)`` of the kernel peak.
"""

import math

import numpy as np
from numba import njit

CUTOFF_SIGMAS = 9.0


@njit(cache=True, nogil=True)
def pair_sum_1d(x, eps, min_gap, cutoff):
    """``sum_{k<l, l-k>=min_gap} exp(-(x_k - x_l)^2 / (2 eps))``."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    inv = 0.5 / eps
    total = 0.0
    for a in range(n):
        xa = xs[a]
        ia = order[a]
        b = a + 1
        while b < n:
            d = xs[b] - xa
            if d >= cutoff:
                break
            if abs(order[b] - ia) >= min_gap:
                total += math.exp(-d * d * inv)
            b += 1
    return total


@njit(cache=True, nogil=True)
def pair_sum_2d(x, y, eps, min_gap, cutoff):
    """Planar analogue of :func:`pair_sum_1d` with ``|z_k - z_l|^2`` in the exponent."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ys = y[order]
    inv = 0.5 / eps
    c2 = cutoff * cutoff
    total = 0.0
    for a in range(n):
        ia = order[a]
        b = a + 1
        while b < n:
            dx = xs[b] - xs[a]
            if dx >= cutoff:
                break
            dy = ys[b] - ys[a]
            r2 = dx * dx + dy * dy
            if r2 < c2 and abs(order[b] - ia) >= min_gap:
                total += math.exp(-r2 * inv)
            b += 1
    return total


@njit(cache=True, nogil=True)
def cross_sum_1d(x, y, eps, cutoff):
    """``sum_{k,l} exp(-(x_k - y_l)^2 / (2 eps))`` over all pairs."""
    xs = np.sort(x)
    ys = np.sort(y)
    m = ys.shape[0]
    inv = 0.5 / eps
    total = 0.0
    lo = 0
    for a in range(xs.shape[0]):
        xa = xs[a]
        while lo < m and ys[lo] <= xa - cutoff:
            lo += 1
        b = lo
        while b < m and ys[b] < xa + cutoff:
            d = ys[b] - xa
            total += math.exp(-d * d * inv)
            b += 1
    return total


def batch_pair_sums_1d(paths, eps, min_gap, cutoff):
    out = np.empty(paths.shape[0])
    for i in range(paths.shape[0]):
        out[i] = pair_sum_1d(np.ascontiguousarray(paths[i]), eps, min_gap, cutoff)
    return out


def batch_pair_sums_2d(paths, eps, min_gap, cutoff):
    out = np.empty(paths.shape[0])
    for i in range(paths.shape[0]):
        out[i] = pair_sum_2d(np.ascontiguousarray(paths[i, 0]), np.ascontiguousarray(paths[i, 1]),
                             eps, min_gap, cutoff)
    return out
