"""Composite Gauss-Legendre rules on graded panels."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureDivergence(RuntimeError):
    """Successive refinements disagree beyond what convergence allows."""


@lru_cache(maxsize=None)
def gauss_legendre01(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def composite(breaks, q: int = 6):
    """Nodes and weights of a ``q``-point rule on every panel ``[b_i, b_{i+1}]``."""
    b = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre01(q)
    a, width = b[:-1, None], np.diff(b)[:, None]
    return (a + width * x).ravel(), (width * w).ravel()


def subdivide(breaks, m: int):
    b = np.asarray(breaks, dtype=float)
    if m <= 1:
        return b
    frac = np.arange(m) / m
    inner = (b[:-1, None] + np.diff(b)[:, None] * frac).ravel()
    return np.append(inner, b[-1])


def graded_breaks(levels: int, lo: float = 0.0, hi: float = 1.0):
    """``lo, lo + w 2^-levels, ..., lo + w/2, hi`` with ``w = hi - lo``."""
    w = hi - lo
    return np.concatenate([[lo], lo + w * 2.0 ** -np.arange(levels, -1, -1)])
