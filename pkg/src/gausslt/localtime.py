"""Local-time estimators and the exact moment integrals of integrator local times.

For ``x(t) = (A 1_[0,t], xi)`` the white-noise calculus gives

    E int l(u)^2 du      = (2/sqrt(2 pi)) int_{s<t} ds dt / |A 1_[s,t]|
    E int l_n(u) l(u) du = (1/sqrt(2 pi)) int_[0,1]^2 ds dt / |A_n 1_[0,t] - A 1_[0,s]|

which this module evaluates by quadrature, next to Monte Carlo estimators
built from Gaussian-kernel smoothed occupation integrals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .hilbert import GridMismatch, L2Operator, SingularOperatorError
from .quadrature import QuadratureDivergence, composite, graded_breaks, subdivide
from .sim import GaussPath, covariance_matrix, integrator_paths, map_replicates

log = logging.getLogger(__name__)

__all__ = [
    "LocalTimeEstimate",
    "MomentQuadrature",
    "SafeguardViolation",
    "gaussian_kernel",
    "check_bandwidth",
    "local_time_kernel",
    "occupation_density",
    "indicator_image_sqnorm",
    "second_moment_exact",
    "cross_moment_exact",
    "lt_convergence_experiment",
    "convergence_table",
    "mc_local_time",
    "mc_selfoverlap",
    "mc_convergence_gap",
    "selfoverlap_expectation",
    "WIENER_SECOND_MOMENT",
]

#: ``E int l(u, 1)^2 du`` for the Wiener process, ``8 / (3 sqrt(2 pi))``.
WIENER_SECOND_MOMENT = 8.0 / (3.0 * math.sqrt(2.0 * math.pi))
#: Kernel bandwidths must satisfy ``eps >= BANDWIDTH_FLOOR * h^2``.
BANDWIDTH_FLOOR = 4.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class SafeguardViolation(AssertionError):
    """``1/|A 1_[s,t]| <= |A^-1| / sqrt(t-s)`` failed at a quadrature node."""


@dataclass(frozen=True, eq=False)
class LocalTimeEstimate:
    u_grid: np.ndarray
    values: np.ndarray
    t_horizon: float
    width: float
    path_count: int = 1
    kind: str = "binned"

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.width)


@dataclass(frozen=True)
class MomentQuadrature:
    integrand_id: str
    refinement: int
    value: float
    error_estimate: float
    coarse_value: float


def gaussian_kernel(y, eps: float):
    return np.exp(-0.5 * np.square(y) / eps) / math.sqrt(2.0 * math.pi * eps)


def check_bandwidth(eps: float, h: float):
    floor = BANDWIDTH_FLOOR * h * h
    if not eps >= floor:
        raise ValueError(f"bandwidth eps={eps:g} is below the grid-coupling floor 4 h^2 = {floor:g}")


def _grid_index(path: GaussPath, t: float) -> int:
    K = path.grid.snap(t)
    if abs(K * path.grid.h - t) > 1e-12 or not 0 <= K <= path.grid.n_cells:
        raise ValueError(f"t={t} is not a grid node")
    return K


def local_time_kernel(path: GaussPath, u: float, t: float, eps: float) -> float:
    """``h sum_{t_k < t} f_eps(x_k - u)``: smoothed occupation integral up to ``t``."""
    if path.dim != 1:
        raise ValueError("local time is defined for one-dimensional paths")
    check_bandwidth(eps, path.grid.h)
    K = _grid_index(path, t)
    return float(path.grid.h * np.sum(gaussian_kernel(path.values[:K] - u, eps)))


def occupation_density(path: GaussPath, bins=None, t: float = 1.0) -> LocalTimeEstimate:
    """Histogram estimate ``l(u_j) = h #{k: t_k < t, x_k in bin j} / du``.

    ``bins`` may be a bin count, an array of equally spaced edges or ``None``
    (width ``4 sd(x) / sqrt(n)`` over the observed range).
    """
    if path.dim != 1:
        raise ValueError("occupation density is defined for one-dimensional paths")
    K = _grid_index(path, t)
    x = path.values[:K]
    lo, hi = (float(x.min()), float(x.max())) if K else (0.0, 0.0)
    if bins is None:
        width = 4.0 * float(np.std(path.values)) / math.sqrt(path.grid.n_cells)
        if width <= 0:
            width = 1.0
        nb = max(1, int(math.ceil((hi - lo) / width)) + 1)
        edges = lo - 0.5 * width + width * np.arange(nb + 1)
    elif np.isscalar(bins):
        nb = int(bins)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, nb + 1)
        edges[-1] = np.nextafter(hi, np.inf)
    else:
        edges = np.asarray(bins, dtype=float)
    widths = np.diff(edges)
    if np.any(widths <= 0) or not np.allclose(widths, widths[0], rtol=1e-9, atol=0):
        raise ValueError("bin edges must be increasing and equally spaced")
    width = float(widths[0])
    counts, _ = np.histogram(x, bins=edges)
    values = path.grid.h * counts / width
    return LocalTimeEstimate(0.5 * (edges[:-1] + edges[1:]), values, K * path.grid.h, width)


# --------------------------------------------------------------- exact moments

class _ImageNorms:
    """``|P 1_[lo,hi] + D 1_[0,lo]|^2`` under the continuum extension.

    The increment part is assembled without subtracting nearly equal
    quantities, so tiny ``hi - lo`` keeps full relative accuracy.
    """

    def __init__(self, P: L2Operator, D: L2Operator | None = None):
        g = P.grid
        self.n, self.h = g.n_cells, g.h
        h = g.h
        GP, MP = P.cumulative, P.matrix
        self.SP = h * GP.T @ GP
        self.WP = h * MP.T @ GP
        self.SmP = h * MP.T @ MP
        self.dP = P.local
        self.has_D = D is not None and (np.any(D.matrix) or np.any(D.local))
        if self.has_D:
            if D.grid != g:
                raise GridMismatch("operators live on different grids")
            GD, MD = D.cumulative, D.matrix
            n = self.n
            self.sD = h * np.einsum("ij,ij->j", GD, GD)
            self.wD = h * np.einsum("ij,ij->j", MD, GD[:, :n])
            self.smD = h * np.einsum("ij,ij->j", MD, MD)
            self.X1 = h * MP.T @ GD
            self.X2 = h * MP.T @ MD
            self.X3 = h * GP.T @ GD
            self.X4 = h * GP.T @ MD
            self.dD = D.local

    def _locate(self, t):
        x = np.asarray(t, dtype=float) * self.n
        i = np.clip(np.floor(x).astype(np.int64), 0, self.n - 1)
        return i, x - i

    def __call__(self, lo, hi, delta=None):
        """Evaluate at ``lo <= hi``; ``delta = hi - lo`` may be passed for accuracy."""
        h = self.h
        j, psi = self._locate(lo)
        k, phi = self._locate(hi)
        j1 = j + 1
        a = 1.0 - psi
        same = k == j
        du = phi - psi if delta is None else np.where(same, np.asarray(delta) * self.n, phi - psi)
        SP, WP, SmP = self.SP, self.WP, self.SmP
        grid_part = SP[k, k] + SP[j1, j1] - 2.0 * SP[j1, k]
        u_diff = (a * a * SmP[j, j] + phi * phi * SmP[k, k] + 2.0 * a * phi * SmP[j, k] + grid_part
                  + 2.0 * a * (WP[j, k] - WP[j, j1]) + 2.0 * phi * (WP[k, k] - WP[k, j1]))
        u2 = np.where(same, du * du * SmP[k, k], u_diff)
        dj, dk = self.dP[j], self.dP[k]
        u2c = np.where(same, h * dk * dk * (np.abs(du) - du * du),
                       h * (dj * dj * psi * (1 - psi) + dk * dk * phi * (1 - phi)))
        total = u2 + u2c
        if self.has_D:
            v2 = self.sD[j] + 2.0 * psi * self.wD[j] + psi * psi * self.smD[j]
            ddj = self.dD[j]
            v2c = h * ddj * ddj * psi * (1 - psi)
            X1, X2, X3, X4 = self.X1, self.X2, self.X3, self.X4
            uv_diff = (a * (X1[j, j] + psi * X2[j, j]) + (X3[k, j] - X3[j1, j])
                       + psi * (X4[k, j] - X4[j1, j]) + phi * (X1[k, j] + psi * X2[k, j]))
            uv = np.where(same, du * (X1[k, j] + psi * X2[k, j]), uv_diff)
            cross = np.where(du >= 0, -du * psi, du * (1 - psi))
            uvc = np.where(same, h * dk * ddj * cross, -h * dj * ddj * psi * (1 - psi))
            total = total + v2 + v2c + 2.0 * (uv + uvc)
        return total


def indicator_image_sqnorm(A: L2Operator, s, t, B: L2Operator | None = None):
    """``|A 1_[0,t] - B 1_[0,s]|^2`` (``B = A`` by default) at arbitrary times."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    B = A if B is None else B
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    upper = t >= s
    out = np.empty(np.broadcast(s, t).shape)
    if np.any(upper):
        # A 1_[0,t] - B 1_[0,s] = A 1_[s,t] + (A - B) 1_[0,s]
        f = _ImageNorms(A, None if B is A else A - B)
        out[upper] = f(lo[upper], hi[upper])
    if np.any(~upper):
        f = _ImageNorms(B, None if B is A else B - A)
        out[~upper] = f(lo[~upper], hi[~upper])
    return out


def _triangle_rule(refinement: int):
    """Nodes on ``{0 <= lo < hi <= 1}`` via ``hi - lo = v^2``, ``lo = (1 - v^2) sigma``."""
    m = 2 ** refinement
    sig_breaks = np.concatenate([graded_breaks(12, 0.0, 0.125)[:-1], np.linspace(0.125, 1.0, 8)])
    sig, ws = composite(subdivide(sig_breaks, m))
    v, wv = composite(subdivide(graded_breaks(24), m))
    V, S = np.meshgrid(v, sig, indexing="ij")
    W = np.outer(wv * 2.0 * v * (1.0 - v * v), ws)
    gap = np.broadcast_to((V * V), S.shape)
    lo = (1.0 - gap) * S
    hi = np.minimum(lo + gap, 1.0)
    return lo.ravel(), hi.ravel(), gap.ravel(), W.ravel()


def _require_invertible(A: L2Operator):
    if not A.is_invertible:
        raise SingularOperatorError(
            f"operator {A.label!r} is not invertible (sigma_min={A.sigma_min:.3e}, "
            f"min |local|={float(np.min(np.abs(A.local))):.3e})")


def _second_moment_level(A: L2Operator, level: int, norms: _ImageNorms) -> float:
    lo, hi, gap, w = _triangle_rule(level)
    q = norms(lo, hi, gap)
    inv2 = A.inverse_norm ** 2
    bad = q * inv2 < gap * (1.0 - 1e-9)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SafeguardViolation(
            f"|A 1_[s,t]|^2={q[i]:.3e} below (t-s)/|A^-1|^2={gap[i] / inv2:.3e} "
            f"at s={lo[i]:.6g}, t={hi[i]:.6g}")
    return float(2.0 / _SQRT_2PI * np.sum(w / np.sqrt(q)))


def _finish(integrand_id, refinement, fine, coarse) -> MomentQuadrature:
    err = abs(fine - coarse)
    if err > 0.1 * abs(fine):
        raise QuadratureDivergence(f"{integrand_id}: refinements {coarse:.6g} -> {fine:.6g} do not settle")
    return MomentQuadrature(integrand_id, refinement, fine, err, coarse)


def second_moment_exact(A: L2Operator, refinement: int = 2) -> MomentQuadrature:
    """``E int l(u)^2 du`` for the integrator generated by ``A``."""
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    _require_invertible(A)
    norms = _ImageNorms(A)
    fine = _second_moment_level(A, refinement, norms)
    coarse = _second_moment_level(A, refinement - 1, norms)
    return _finish(f"second_moment[{A.label}]", refinement, fine, coarse)


def _cross_level(level, upper: _ImageNorms, lower: _ImageNorms) -> float:
    lo, hi, gap, w = _triangle_rule(level)
    total = np.sum(w / np.sqrt(upper(lo, hi, gap))) + np.sum(w / np.sqrt(lower(lo, hi, gap)))
    return float(total / _SQRT_2PI)


def cross_moment_exact(A_n: L2Operator, A: L2Operator, refinement: int = 2) -> MomentQuadrature:
    """``E int l_n(u) l(u) du`` over the full unit square of times."""
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    _require_invertible(A_n)
    _require_invertible(A)
    if A_n.grid != A.grid:
        raise GridMismatch("operators live on different grids")
    D = A_n - A
    # t > s (time of A_n later): A_n 1_[s,t] + (A_n - A) 1_[0,s]
    upper = _ImageNorms(A_n, D)
    # t < s: A 1_[t,s] + (A - A_n) 1_[0,t], same norm up to sign
    lower = _ImageNorms(A, -1.0 * D)
    fine = _cross_level(refinement, upper, lower)
    coarse = _cross_level(refinement - 1, upper, lower)
    return _finish(f"cross_moment[{A_n.label},{A.label}]", refinement, fine, coarse)


def convergence_table(operator_sequence: Callable[[int], L2Operator], A: L2Operator,
                      ns: Sequence[int], refinement: int = 2) -> list[dict]:
    """Per ``n``: the mean-square distance of local times and its ingredients."""
    base = second_moment_exact(A, refinement)
    rows = []
    inv_norms = []
    for n in ns:
        An = operator_sequence(n)
        m_n = second_moment_exact(An, refinement)
        c_n = cross_moment_exact(An, A, refinement)
        value = m_n.value - 2.0 * c_n.value + base.value
        err = m_n.error_estimate + 2.0 * c_n.error_estimate + base.error_estimate
        inv_norms.append(An.inverse_norm)
        rows.append({"n": n, "value": value, "error_estimate": err, "second_moment": m_n.value,
                     "cross_moment": c_n.value, "inverse_norm": An.inverse_norm})
    log.info("sup_n |A_n^-1| over the sequence: %.6g", max(inv_norms) if inv_norms else float("nan"))
    return rows


def lt_convergence_experiment(operator_sequence: Callable[[int], L2Operator], A: L2Operator,
                              ns: Sequence[int], refinement: int = 2) -> list[tuple[int, float]]:
    """``[(n, E int (l_n - l)^2 du)]`` assembled from the exact moments."""
    return [(r["n"], r["value"]) for r in convergence_table(operator_sequence, A, ns, refinement)]


# ----------------------------------------------------------------- Monte Carlo

def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else math.nan
    return m, se


def mc_local_time(A: L2Operator, u: float, t: float, eps: float, reps: int, seed: int,
                  workers: int = 1) -> tuple[float, float]:
    """Mean and standard error of the kernel local time over ``reps`` paths."""
    grid = A.grid
    check_bandwidth(eps, grid.h)
    K = grid.snap(t)

    def chunk(idx):
        X = integrator_paths(A, seed, idx)[:, :K]
        return grid.h * np.sum(gaussian_kernel(X - u, eps), axis=1)

    return _mean_se(map_replicates(chunk, reps, workers))


def _cutoff(eps):
    return _kernels.CUTOFF_SIGMAS * math.sqrt(eps)


def mc_selfoverlap(A: L2Operator, eps: float, reps: int, seed: int,
                   workers: int = 1) -> tuple[float, float]:
    """Monte Carlo of ``h^2 sum_{k != k'} f_eps(x_k - x_k')`` (nodes ``t_k < 1``)."""
    grid = A.grid
    check_bandwidth(eps, grid.h)
    n = grid.n_cells
    scale = 2.0 * grid.h ** 2 / math.sqrt(2.0 * math.pi * eps)

    def chunk(idx):
        X = integrator_paths(A, seed, idx)[:, :n]
        return scale * _kernels.batch_pair_sums_1d(X, eps, 1, _cutoff(eps))

    return _mean_se(map_replicates(chunk, reps, workers))


def mc_convergence_gap(A_n: L2Operator, A: L2Operator, eps: float, reps: int, seed: int,
                       workers: int = 1) -> tuple[float, float]:
    """Kernel estimate of ``E int (l_n - l)^2 du`` with common noise for both paths.

    Per path this is ``h^2 sum_{k,k'} [f(x^n_k - x^n_k') + f(x_k - x_k') - 2 f(x^n_k - x_k')]``
    over all pairs including ``k = k'``, i.e. the exact squared distance of
    the two occupation densities smoothed at variance ``eps / 2``; it is
    never negative.
    """
    grid = A.grid
    check_bandwidth(eps, grid.h)
    n = grid.n_cells
    norm = grid.h ** 2 / math.sqrt(2.0 * math.pi * eps)
    cut = _cutoff(eps)

    def chunk(idx):
        X = integrator_paths(A, seed, idx)[:, :n]
        Xn = integrator_paths(A_n, seed, idx)[:, :n]
        out = np.empty(len(idx))
        for i in range(len(idx)):
            x, xn = np.ascontiguousarray(X[i]), np.ascontiguousarray(Xn[i])
            s = 2.0 * (_kernels.pair_sum_1d(xn, eps, 1, cut) + _kernels.pair_sum_1d(x, eps, 1, cut) + n)
            out[i] = norm * (s - 2.0 * _kernels.cross_sum_1d(xn, x, eps, cut))
        return out

    return _mean_se(map_replicates(chunk, reps, workers))


def selfoverlap_expectation(A: L2Operator, eps: float) -> float:
    """Exact mean of the :func:`mc_selfoverlap` estimator (kernel and grid bias included)."""
    grid = A.grid
    n = grid.n_cells
    C = covariance_matrix(A)[:n, :n]
    d = np.diag(C)
    total = 0.0
    for start in range(0, n, 512):
        rows = slice(start, min(start + 512, n))
        var = d[rows, None] + d[None, :] - 2.0 * C[rows]
        dens = 1.0 / np.sqrt(2.0 * math.pi * (np.maximum(var, 0.0) + eps))
        idx = np.arange(rows.start, rows.stop)
        dens[idx - start, idx] = 0.0
        total += float(dens.sum())
    return grid.h ** 2 * total
