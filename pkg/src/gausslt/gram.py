"""Gram matrices, projections and the Hilbert-space inequalities behind the
local-time results.

Every ``check_*`` function evaluates one inequality or identity on one input
and returns a :class:`VerifyReport`; randomized suites live in
:mod:`gausslt.lemmas` and merge reports with :func:`merge_reports`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hilbert import GridMismatch, L2Operator, L2Vec, SingularOperatorError, apply

__all__ = [
    "GramSystem",
    "VerifyReport",
    "merge_reports",
    "pivoted_cholesky",
    "gram_matrix",
    "gram_system",
    "gram_det",
    "project",
    "nondeterminism_ratio",
    "check_gram_lower_bound",
    "check_inverse_gram_quadratic",
    "check_density_bound",
    "check_projection_transfer",
    "synthesize_matching_pair",
    "indicator_gram_bound",
    "check_singularity_integrability",
    "singularity_majorant",
    "SingularityBoundViolation",
    "dual_vector",
    "log_transform_delta_product",
    "log_transform_integrated_product",
    "log_transform_integrated_product_reduced",
    "check_delta_product_identity",
]

#: Pivots below ``DEPENDENCE_RTOL * max pivot`` count as zero.
DEPENDENCE_RTOL = 1e-12
DET_FLOOR = 1e-300


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of a property check.

    ``worst_margin`` is the smallest normalized ``LHS - RHS`` seen over all
    trials; a check passes iff ``worst_margin >= -tolerance``.
    """

    name: str
    passed: bool
    trials: int
    worst_margin: float
    tolerance: float
    witness: dict = field(default_factory=dict)
    seed: int | None = None
    inconclusive: bool = False

    @classmethod
    def from_margin(cls, name, margin, tolerance, witness=None, seed=None):
        margin = float(margin)
        return cls(name, bool(margin >= -tolerance), 1, margin, tolerance, witness or {}, seed)

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def csv_row(self) -> list[str]:
        return [self.name, str(self.trials), repr(self.worst_margin),
                "" if self.seed is None else str(self.seed), self.status]

    def summary(self) -> str:
        return (f"{self.name:<26s} {self.status.upper():<12s} trials={self.trials:<5d} "
                f"worst_margin={self.worst_margin:+.3e} (tol {self.tolerance:.0e})")

    def witness_json(self) -> str:
        return json.dumps(self.witness, sort_keys=True, indent=1, default=_jsonify)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, L2Vec):
        return {"n_cells": obj.grid.n_cells, "coeffs": obj.coeffs.tolist()}
    raise TypeError(f"not serializable: {type(obj)}")


def merge_reports(reports: Sequence[VerifyReport], name: str | None = None,
                  seed: int | None = None) -> VerifyReport:
    """Min-reduce trial reports in the given order (deterministic ties: first wins)."""
    if not reports:
        raise ValueError("no reports to merge")
    worst = reports[0]
    for r in reports[1:]:
        if r.worst_margin < worst.worst_margin:
            worst = r
    trials = sum(r.trials for r in reports)
    passed = all(r.passed for r in reports)
    return replace(worst, name=name or worst.name, trials=trials, passed=passed,
                   seed=seed if seed is not None else worst.seed,
                   inconclusive=any(r.inconclusive for r in reports))


# ---------------------------------------------------------------- Gram basics

def pivoted_cholesky(gram: np.ndarray, rtol: float = DEPENDENCE_RTOL):
    """Diagonally pivoted Cholesky ``gram[piv][:, piv] = L L^T``.

    Returns ``(L, piv, pivots)``; ``L`` has ``rank`` columns and ``pivots``
    holds the accepted squared diagonal entries in pivot order.  Elimination
    stops once the largest remaining pivot is below ``rtol`` times the first.
    """
    a = np.array(gram, dtype=float, copy=True)
    k = a.shape[0]
    piv = np.arange(k)
    L = np.zeros((k, k))
    pivots = []
    first = None
    for i in range(k):
        d = np.diag(a)[i:]
        j = i + int(np.argmax(d))
        dmax = a[j, j]
        if first is None:
            first = dmax
        if not dmax > 0 or dmax <= rtol * first:
            break
        if j != i:
            a[[i, j], :] = a[[j, i], :]
            a[:, [i, j]] = a[:, [j, i]]
            L[[i, j], :] = L[[j, i], :]
            piv[[i, j]] = piv[[j, i]]
        lii = math.sqrt(dmax)
        L[i, i] = lii
        L[i + 1:, i] = a[i + 1:, i] / lii
        a[i + 1:, i + 1:] -= np.outer(L[i + 1:, i], L[i + 1:, i])
        pivots.append(dmax)
    r = len(pivots)
    return L[:, :r], piv, np.array(pivots)


def _coeff_rows(vs: Sequence[L2Vec]) -> np.ndarray:
    vs = list(vs)
    if not vs:
        return np.zeros((0, 0))
    g = vs[0].grid
    for v in vs[1:]:
        if v.grid != g:
            raise GridMismatch("all vectors must share one grid")
    return np.stack([v.coeffs for v in vs])


def gram_matrix(vs: Sequence[L2Vec]) -> np.ndarray:
    V = _coeff_rows(vs)
    if V.size == 0:
        return np.zeros((0, 0))
    return vs[0].grid.h * (V @ V.T)


@dataclass(frozen=True, eq=False)
class GramSystem:
    vectors: tuple
    gram: np.ndarray
    det: float
    chol_ok: bool
    rank: int


def _det_from_pivots(pivots: np.ndarray, k: int) -> float:
    if len(pivots) < k:
        return 0.0
    d = float(np.prod(pivots))
    return 0.0 if d < DET_FLOOR else d


def gram_system(vs: Sequence[L2Vec]) -> GramSystem:
    vs = tuple(vs)
    G = gram_matrix(vs)
    k = len(vs)
    _, _, pivots = pivoted_cholesky(G) if k else (None, None, np.array([]))
    return GramSystem(vs, G, _det_from_pivots(pivots, k), len(pivots) == k, len(pivots))


def gram_det(vs: Sequence[L2Vec]) -> float:
    """Gram determinant; 0 for (numerically) dependent families, 1 for none."""
    vs = list(vs)
    if not vs:
        return 1.0
    return gram_system(vs).det


def _independent_subset(vs: Sequence[L2Vec]) -> list[int]:
    G = gram_matrix(vs)
    if G.size == 0:
        return []
    _, piv, pivots = pivoted_cholesky(G)
    return sorted(piv[: len(pivots)].tolist())


def project(vs: Sequence[L2Vec], h: L2Vec) -> L2Vec:
    """Orthogonal projection of ``h`` onto the span of ``vs``."""
    vs = list(vs)
    idx = _independent_subset(vs)
    if not idx:
        return L2Vec.zeros(h.grid)
    basis = [vs[i] for i in idx]
    V = _coeff_rows(basis)
    if V.shape[1] != h.grid.n_cells or basis[0].grid != h.grid:
        raise GridMismatch("projection target on a different grid")
    G = h.grid.h * (V @ V.T)
    b = h.grid.h * (V @ h.coeffs)
    lam = np.linalg.solve(G, b)
    return L2Vec(h.grid, lam @ V)


# ------------------------------------------------------ local nondeterminism

def nondeterminism_ratio(path_vectors: Callable[[float], L2Vec], times: Sequence[float]) -> float:
    """Gram ratio ``G(g(t1), dg(t1), ...) / (|g(t1)|^2 prod |dg|^2)``.

    For ``y(t) = (g(t), xi)`` this equals the product of Berman's
    conditional-to-unconditional variance ratios ``V_2 ... V_m``.
    """
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    gs = [path_vectors(t) for t in times]
    vecs = [gs[0]] + [gs[i + 1] - gs[i] for i in range(len(gs) - 1)]
    sq = []
    for i, v in enumerate(vecs):
        n2 = float(v.grid.h * v.coeffs @ v.coeffs)
        if not n2 > 0:
            pair = f"g({times[0]})" if i == 0 else f"(t={times[i - 1]}, t={times[i]})"
            raise ValueError(f"zero increment at {pair}")
        sq.append(n2)
    ratio = gram_det(vecs) / float(np.prod(sq))
    return float(min(max(ratio, 0.0), 1.0))


# ------------------------------------------------------- operator inequalities

def _images(A: L2Operator, es: Sequence[L2Vec]) -> list[L2Vec]:
    return [apply(A, e) for e in es]


def check_gram_lower_bound(A: L2Operator, es: Sequence[L2Vec], rtol: float = 1e-10) -> VerifyReport:
    """``G(Ae_1..Ae_k) >= sigma_min(A)^(2k) G(e_1..e_k)``, margin relative to ``G(Ae)``."""
    if not A.is_invertible:
        raise SingularOperatorError(f"operator {A.label!r} is not invertible (sigma_min={A.sigma_min:.3e})")
    es = list(es)
    k = len(es)
    lhs = gram_det(_images(A, es))
    rhs = A.sigma_min ** (2 * k) * gram_det(es)
    scale = max(lhs, rhs)
    margin = 0.0 if scale == 0 else (lhs - rhs) / scale
    return VerifyReport.from_margin(
        "gram_lower_bound", margin, rtol,
        {"lhs": lhs, "rhs": rhs, "k": k, "matrix": A.matrix, "es": [e.coeffs for e in es]})


def check_inverse_gram_quadratic(A: L2Operator, es: Sequence[L2Vec], u: Sequence[float],
                                 rtol: float = 1e-8) -> VerifyReport:
    """``(B^-1(Ae) u, u) >= |A|^-2 sum (u_{i+1}-u_i)^2 / |e_{i+1}-e_i|^2``.

    ``es`` are ``e_1..e_n`` (``e_0 = 0`` implicit) with pairwise orthogonal
    increments; ``u`` are ``u_1..u_n`` (``u_0 = 0`` implicit).
    """
    es = list(es)
    u = np.asarray(u, dtype=float)
    if len(es) != len(u):
        raise ValueError("need one u value per vector")
    grid = es[0].grid
    incs = [es[0]] + [es[i + 1] - es[i] for i in range(len(es) - 1)]
    Ginc = gram_matrix(incs)
    d = np.diag(Ginc)
    if np.any(d <= 0):
        raise ValueError("increments must be nonzero")
    off = Ginc - np.diag(d)
    if np.max(np.abs(off)) > 1e-10 * np.max(d):
        raise ValueError("increments are not pairwise orthogonal")
    B = gram_matrix(_images(A, es))
    L, piv, pivots = pivoted_cholesky(B)
    if len(pivots) < len(es):
        raise SingularOperatorError("Gram matrix of the images is numerically singular")
    lhs = float(u @ np.linalg.solve(B, u))
    du = np.diff(np.concatenate([[0.0], u]))
    rhs = float(np.sum(du ** 2 / d)) / A.sigma_max ** 2
    scale = max(lhs, rhs)
    margin = 0.0 if scale == 0 else (lhs - rhs) / scale
    return VerifyReport.from_margin(
        "inverse_gram_quadratic", margin, rtol,
        {"lhs": lhs, "rhs": rhs, "u": u, "matrix": A.matrix, "es": [e.coeffs for e in es],
         "n_cells": grid.n_cells})


def check_density_bound(A: L2Operator, times: Sequence[float], us: Sequence[float],
                        tol: float = 1e-10) -> VerifyReport:
    """Gaussian density of ``(x(s_1)..x(s_n))`` against its product-form bound.

    Bound: ``(2 pi)^(-n/2) sigma_min^-n / sqrt(prod ds) * exp(-c2/2 sum du^2/ds)``
    with ``c2 = sigma_max^-2``.  Margin is ``log(bound) - log(density)``.
    """
    if not A.is_invertible:
        raise SingularOperatorError(f"operator {A.label!r} is not invertible")
    grid = A.grid
    times = np.asarray(times, dtype=float)
    us = np.asarray(us, dtype=float)
    n = len(times)
    idx = np.array([grid.snap(t) for t in times])
    if np.any(np.abs(idx * grid.h - times) > 1e-12) or np.any(np.diff(idx) <= 0) or idx[0] <= 0:
        raise ValueError("times must be distinct, increasing, positive grid nodes")
    imgs = A.cumulative[:, idx]
    C = grid.h * imgs.T @ imgs
    try:
        Lc = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError("singular covariance") from exc
    z = np.linalg.solve(Lc, us)
    log_p = -0.5 * n * math.log(2 * math.pi) - float(np.sum(np.log(np.diag(Lc)))) - 0.5 * float(z @ z)
    ds = np.diff(np.concatenate([[0.0], idx * grid.h]))
    du = np.diff(np.concatenate([[0.0], us]))
    log_bound = (-0.5 * n * math.log(2 * math.pi) - n * math.log(A.sigma_min)
                 - 0.5 * float(np.sum(np.log(ds)))
                 - 0.5 * float(np.sum(du ** 2 / ds)) / A.sigma_max ** 2)
    return VerifyReport.from_margin(
        "density_bound", log_bound - log_p, tol,
        {"log_density": log_p, "log_bound": log_bound, "times": times, "us": us, "matrix": A.matrix})


def synthesize_matching_pair(Q: L2Operator, es: Sequence[L2Vec], g: L2Vec) -> L2Vec:
    """The ``f`` in ``span(es)`` with ``(f, e_i) = (g, Q e_i)`` for all ``i``."""
    es = list(es)
    V = _coeff_rows(es)
    h = g.grid.h
    b = np.array([h * g.coeffs @ (Q.matrix @ e.coeffs) for e in es])
    lam = np.linalg.solve(h * V @ V.T, b)
    return L2Vec(g.grid, lam @ V)


def check_projection_transfer(Q: L2Operator, es: Sequence[L2Vec], f: L2Vec, g: L2Vec,
                              rtol: float = 1e-10) -> VerifyReport:
    """``|P_1 f| <= |P_2 g|`` for projections onto ``span(e)`` and ``span(Qe)``.

    Requires ``(f, e_i) = (g, Q e_i)``.  Margin is ``(|P_2 g| - |P_1 f|) / |P_2 g|``.
    """
    es = list(es)
    qes = _images(Q, es)
    if gram_system(qes).rank < len(es):
        raise ValueError("Q e_1..Q e_n are linearly dependent")
    h = f.grid.h
    lhs_ip = np.array([h * f.coeffs @ e.coeffs for e in es])
    rhs_ip = np.array([h * g.coeffs @ qe.coeffs for qe in qes])
    scale = max(1.0, float(np.max(np.abs(lhs_ip))))
    if np.max(np.abs(lhs_ip - rhs_ip)) > 1e-9 * scale:
        raise ValueError("(f, e_i) = (g, Q e_i) does not hold")
    p1 = math.sqrt(max(inner_(project(es, f)), 0.0))
    p2 = math.sqrt(max(inner_(project(qes, g)), 0.0))
    margin = 0.0 if p2 == 0 and p1 == 0 else (p2 - p1) / max(p2, 1e-300)
    return VerifyReport.from_margin(
        "projection_transfer", margin, rtol,
        {"P1f": p1, "P2g": p2, "Q": Q.matrix, "es": [e.coeffs for e in es], "g": g.coeffs})


def inner_(v: L2Vec) -> float:
    return float(v.grid.h * v.coeffs @ v.coeffs)


def indicator_gram_bound(deltas: Sequence[L2Vec], atol: float = 1e-12) -> VerifyReport:
    """``Gamma(1_D1..1_Dn) >= prod_k |D_k minus (D_1 u ... u D_{k-1})|``.

    ``deltas`` are indicators of unions of grid cells (0/1 coefficients).
    """
    deltas = list(deltas)
    masks = []
    for d in deltas:
        c = d.coeffs
        if not np.all((c == 0) | (c == 1)):
            raise ValueError("subsets must be unions of grid cells (0/1 coefficients)")
        masks.append(c.astype(bool))
    h = deltas[0].grid.h
    covered = np.zeros_like(masks[0])
    rhs = 1.0
    for m in masks:
        rhs *= h * np.count_nonzero(m & ~covered)
        covered |= m
    lhs = gram_det(deltas)
    return VerifyReport.from_margin(
        "indicator_gram_bound", lhs - rhs, atol,
        {"gamma": lhs, "residual_product": rhs, "masks": [m.astype(int) for m in masks]})


class SingularityBoundViolation(AssertionError):
    pass


def singularity_majorant(alpha: float) -> tuple[float, float]:
    """``(b, M)``: the level-set majorant ``b + 4 int_b^inf z^(-2/(1+alpha)) dz``
    at its minimizing ``b = 2^(1+alpha)``."""
    b = 2.0 ** (1.0 + alpha)
    expo = 2.0 / (1.0 + alpha)
    return b, b + 4.0 * b ** (1.0 - expo) / (expo - 1.0)


def check_singularity_integrability(y: L2Vec, alpha: float) -> float:
    """``int_0^1 dt / |1_[0,t] - y|^(1+alpha)``, integrated exactly cell by cell.

    ``|1_[0,t] - y|^2`` is piecewise linear in ``t``, so each cell integral is
    closed-form.  Raises :class:`SingularityBoundViolation` if the value
    exceeds :func:`singularity_majorant`.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    grid = y.grid
    h = grid.h
    c = y.coeffs
    beta = 0.5 * (1.0 + alpha)
    # q(t_k) at nodes; slope (1 - 2 y_k) inside cell k
    q_nodes = float(h * c @ c) + grid.nodes - 2.0 * h * np.concatenate([[0.0], np.cumsum(c)])
    q_nodes = np.maximum(q_nodes, 0.0)
    q0, q1 = q_nodes[:-1], q_nodes[1:]
    slope = 1.0 - 2.0 * c
    total = 0.0
    for a, b, m in zip(q0, q1, slope):
        if abs(m) * h <= 1e-14 * max(a, b, 1e-300):
            if a == 0.0:
                return math.inf
            total += h * a ** (-beta)
        else:
            total += (b ** (1.0 - beta) - a ** (1.0 - beta)) / (m * (1.0 - beta))
    _, maj = singularity_majorant(alpha)
    if total > maj:
        raise SingularityBoundViolation(f"integral {total} exceeds majorant {maj}")
    return float(total)


# ----------------------------------------------------------- white-noise side

def dual_vector(fs: Sequence[L2Vec]) -> L2Vec:
    """The ``f`` in ``span(fs)`` with ``(f, f_k) = 1`` for every ``k``."""
    fs = list(fs)
    G = gram_matrix(fs)
    if pivoted_cholesky(G)[2].size < len(fs):
        raise ValueError("vectors are linearly dependent")
    lam = np.linalg.solve(G, np.ones(len(fs)))
    return L2Vec(fs[0].grid, lam @ _coeff_rows(fs))


def _log_gram_det(vs):
    G = gram_matrix(vs)
    sign, logdet = np.linalg.slogdet(G)
    if sign <= 0:
        raise ValueError("vectors are linearly dependent")
    return float(logdet)


def log_transform_delta_product(rs: Sequence[L2Vec], h: L2Vec) -> float:
    """Log Fourier-Wiener transform of ``prod_j delta_0((r_j, xi))`` at ``h``."""
    rs = list(rs)
    m = len(rs)
    ph = project(rs, h)
    return -0.5 * m * math.log(2 * math.pi) - 0.5 * _log_gram_det(rs) - 0.5 * inner_(ph)


def log_transform_integrated_product(fs: Sequence[L2Vec], h: L2Vec) -> float:
    """Log transform of ``int prod_k delta_0((f_k, xi) - u) du`` after the
    Gaussian ``u``-integration, written with the inverse Gram matrix only."""
    fs = list(fs)
    n = len(fs)
    B = gram_matrix(fs)
    a = np.array([h.grid.h * f.coeffs @ h.coeffs for f in fs])
    e = np.ones(n)
    Bia = np.linalg.solve(B, a)
    Bie = np.linalg.solve(B, e)
    ee = float(e @ Bie)
    quad = float(a @ Bia) - float(a @ Bie) ** 2 / ee
    return (-0.5 * (n - 1) * math.log(2 * math.pi) - 0.5 * _log_gram_det(fs)
            - 0.5 * math.log(ee) - 0.5 * quad)


def log_transform_integrated_product_reduced(fs: Sequence[L2Vec], h: L2Vec) -> float:
    """Same transform in the dual-vector form ``exp(-|P_{f-perp} h|^2/2) / (sqrt(G) |f|)``."""
    fs = list(fs)
    n = len(fs)
    f = dual_vector(fs)
    ph = project(fs, h)
    pf = (inner(ph, f) / inner_(f)) * f
    perp = ph - pf
    return (-0.5 * (n - 1) * math.log(2 * math.pi) - 0.5 * _log_gram_det(fs)
            - 0.5 * math.log(inner_(f)) - 0.5 * inner_(perp))


def inner(f: L2Vec, g: L2Vec) -> float:
    return float(f.grid.h * f.coeffs @ g.coeffs)


def _projector(vs: Sequence[L2Vec]) -> np.ndarray:
    """Matrix of the orthogonal projection onto ``span(vs)`` in coefficient space."""
    V = _coeff_rows(vs)
    Qm, _ = np.linalg.qr(V.T)
    return Qm @ Qm.T


def check_delta_product_identity(fs: Sequence[L2Vec], hs: Sequence[L2Vec] = (),
                                 rtol: float = 1e-8) -> VerifyReport:
    """Check that the consecutive differences ``r_j = f_{j+1} - f_j`` satisfy

    (i)   ``G(r) = |f|^2 G(f_1..f_n)`` with ``f`` the dual vector;
    (ii)  ``span(r) = {v in span(fs): (v, f) = 0}`` (projector distance);
    (iii) the delta-product transform agrees with both integrated-product
          forms at every ``h`` in ``hs``.

    The margin is ``-max(err_i, 10 * err_ii, err_iii)`` so the projector
    test runs at one tenth of ``rtol``.
    """
    fs = list(fs)
    n = len(fs)
    if n < 2:
        raise ValueError("need at least two vectors")
    f = dual_vector(fs)
    rs = [fs[j + 1] - fs[j] for j in range(n - 1)]
    g_r = gram_det(rs)
    g_f = gram_det(fs)
    target = inner_(f) * g_f
    err_i = abs(g_r - target) / max(abs(target), 1e-300)

    # f-perp inside span(fs): project span(fs) then remove the f direction
    P_fs = _projector(fs)
    fc = f.coeffs / math.sqrt(float(f.coeffs @ f.coeffs))
    P_perp = P_fs - np.outer(fc, fc)
    P_r = _projector(rs)
    err_ii = float(np.max(np.abs(P_perp - P_r)))

    err_iii = 0.0
    worst_h = None
    for h in hs:
        lhs = log_transform_delta_product(rs, h)
        e = max(abs(math.expm1(lhs - log_transform_integrated_product_reduced(fs, h))),
                abs(math.expm1(lhs - log_transform_integrated_product(fs, h))))
        if e > err_iii:
            err_iii, worst_h = e, h.coeffs
    margin = -max(err_i, 10.0 * err_ii, err_iii)
    return VerifyReport.from_margin(
        "delta_product_identity", margin, rtol,
        {"gram_diffs": g_r, "dual_norm2_gram": target, "err_gram": err_i,
         "err_projector": err_ii, "err_transform": err_iii,
         "fs": [v.coeffs for v in fs], "worst_h": worst_h})
