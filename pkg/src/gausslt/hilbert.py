"""Step-function model of L2([0, 1]) on a uniform grid.

Vectors are piecewise-constant functions on ``n_cells`` equal cells and carry
the inner product ``(f, g) = h * sum(f_i * g_i)``.  Operators act on the
coefficient vectors through a dense matrix.

To give meaning to ``A 1_[s,t]`` for times that are *not* grid nodes, every
operator also carries a ``local`` multiplier ``d`` (a step function).  The
operator is extended to all of L2 by letting it act as multiplication by
``d`` on the sub-cell fluctuations, i.e. on the orthogonal complement of the
step functions.  For the identity, multiplication operators and their sums
and products this extension is the exact continuum operator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "GridSpec",
    "L2Vec",
    "L2Operator",
    "GridMismatch",
    "SingularOperatorError",
    "make_grid",
    "indicator",
    "inner",
    "norm",
    "apply",
    "adjoint",
    "compose",
    "invert",
    "builtin_operator",
    "volterra_matrix",
]

#: ``invert`` refuses operators with ``sigma_min <= INVERT_RTOL * sigma_max``.
INVERT_RTOL = 1e-10


class GridMismatch(ValueError):
    """Two objects live on different grids."""


class SingularOperatorError(np.linalg.LinAlgError):
    """An operator is numerically singular."""


@dataclass(frozen=True)
class GridSpec:
    n_cells: int

    def __post_init__(self):
        if isinstance(self.n_cells, bool) or int(self.n_cells) != self.n_cells:
            raise ValueError(f"n_cells must be an integer, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        if self.n_cells < 2:
            raise ValueError(f"n_cells must be >= 2, got {self.n_cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        """The ``n_cells + 1`` grid nodes ``t_k = k h``."""
        return np.arange(self.n_cells + 1) / self.n_cells

    def snap(self, t: float) -> int:
        """Index of the grid node nearest to ``t``."""
        return int(round(float(t) * self.n_cells))


def make_grid(n_cells: int) -> GridSpec:
    return GridSpec(n_cells)


def _check_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"grid mismatch: {a.grid.n_cells} vs {b.grid.n_cells} cells")


@dataclass(frozen=True, eq=False)
class L2Vec:
    """Step function given by its value on each grid cell."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} coefficients, got shape {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "L2Vec":
        return cls(grid, np.zeros(grid.n_cells))

    def __add__(self, other: "L2Vec") -> "L2Vec":
        _check_grid(self, other)
        return L2Vec(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "L2Vec") -> "L2Vec":
        _check_grid(self, other)
        return L2Vec(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "L2Vec":
        return L2Vec(self.grid, -self.coeffs)

    def __mul__(self, c: float) -> "L2Vec":
        return L2Vec(self.grid, self.coeffs * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "L2Vec":
        return L2Vec(self.grid, self.coeffs / float(c))

    def __repr__(self):
        return f"L2Vec(n_cells={self.grid.n_cells}, coeffs={np.array2string(self.coeffs, threshold=8)})"


def indicator(grid: GridSpec, s: float, t: float) -> L2Vec:
    """Indicator of ``[s, t]`` with both endpoints snapped to the nearest node."""
    if not (0.0 <= s <= t <= 1.0):
        raise ValueError(f"need 0 <= s <= t <= 1, got s={s}, t={t}")
    i, j = grid.snap(s), grid.snap(t)
    c = np.zeros(grid.n_cells)
    c[i:j] = 1.0
    return L2Vec(grid, c)


def inner(f: L2Vec, g: L2Vec) -> float:
    _check_grid(f, g)
    return float(f.grid.h * np.dot(f.coeffs, g.coeffs))


def norm(f: L2Vec) -> float:
    return math.sqrt(max(inner(f, f), 0.0))


class L2Operator:
    """Bounded operator on the step-function space.

    Parameters
    ----------
    grid
        Grid the operator acts on.
    matrix
        ``n x n`` action on coefficient vectors.
    local
        Multiplier applied to sub-cell fluctuations (see module docstring).
        Defaults to ones, i.e. the operator is the identity off the step space.
    label
        Free-form identifier, carried into paths and reports.
    """

    def __init__(self, grid: GridSpec, matrix, local=None, label: str = "custom", flags=()):
        m = np.array(matrix, dtype=float)
        n = grid.n_cells
        if m.shape != (n, n):
            raise ValueError(f"matrix must be {n}x{n}, got {m.shape}")
        if local is None:
            d = np.ones(n)
        else:
            d = np.broadcast_to(np.asarray(local, dtype=float), (n,)).copy()
        m.flags.writeable = False
        d.flags.writeable = False
        self.grid = grid
        self.matrix = m
        self.local = d
        self.label = label
        self.flags = tuple(flags)

    def __repr__(self):
        return f"L2Operator({self.label!r}, n_cells={self.grid.n_cells})"

    @cached_property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0])

    @property
    def is_invertible(self) -> bool:
        return self.sigma_min > INVERT_RTOL * self.sigma_max and bool(np.all(self.local != 0))

    @property
    def inverse_norm(self) -> float:
        """Norm of the inverse of the continuum extension (``inf`` if singular)."""
        if not self.is_invertible:
            return math.inf
        return 1.0 / min(self.sigma_min, float(np.min(np.abs(self.local))))

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Columns ``k = 0..n`` hold the coefficients of ``A 1_[0, t_k]``."""
        n = self.grid.n_cells
        out = np.zeros((n, n + 1))
        np.cumsum(self.matrix, axis=1, out=out[:, 1:])
        return out

    # operator algebra
    def __add__(self, other: "L2Operator") -> "L2Operator":
        _check_grid(self, other)
        return L2Operator(self.grid, self.matrix + other.matrix, self.local + other.local,
                          f"({self.label}+{other.label})")

    def __sub__(self, other: "L2Operator") -> "L2Operator":
        _check_grid(self, other)
        return L2Operator(self.grid, self.matrix - other.matrix, self.local - other.local,
                          f"({self.label}-{other.label})")

    def __mul__(self, c: float) -> "L2Operator":
        c = float(c)
        return L2Operator(self.grid, c * self.matrix, c * self.local, f"{c:g}*{self.label}")

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, L2Operator):
            return compose(self, other)
        return apply(self, other)


def apply(A: L2Operator, f: L2Vec) -> L2Vec:
    _check_grid(A, f)
    return L2Vec(A.grid, A.matrix @ f.coeffs)


def adjoint(A: L2Operator) -> L2Operator:
    # uniform weights: the L2 adjoint is the transpose
    return L2Operator(A.grid, A.matrix.T, A.local, f"{A.label}*")


def compose(A: L2Operator, B: L2Operator) -> L2Operator:
    """``A o B``."""
    _check_grid(A, B)
    return L2Operator(A.grid, A.matrix @ B.matrix, A.local * B.local, f"{A.label}.{B.label}")


def invert(A: L2Operator) -> L2Operator:
    if not A.sigma_min > INVERT_RTOL * A.sigma_max:
        raise SingularOperatorError(
            f"operator {A.label!r} is numerically singular: sigma_min={A.sigma_min:.3e}, "
            f"sigma_max={A.sigma_max:.3e}"
        )
    if np.any(A.local == 0):
        raise SingularOperatorError(f"operator {A.label!r} has a vanishing local multiplier")
    return L2Operator(A.grid, np.linalg.inv(A.matrix), 1.0 / A.local, f"{A.label}^-1")


KernelLike = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray]


def volterra_matrix(grid: GridSpec, kernel: KernelLike) -> np.ndarray:
    """Matrix of ``f -> int_0^t k(t, s) f(s) ds``.

    ``kernel`` is a callable evaluated at cell midpoints or an ``n x n`` table
    of those values.  The diagonal cell gets half weight.
    """
    n = grid.n_cells
    if callable(kernel):
        mid = (np.arange(n) + 0.5) * grid.h
        k = np.asarray(kernel(mid[:, None], mid[None, :]), dtype=float)
        k = np.broadcast_to(k, (n, n))
    else:
        k = np.asarray(kernel, dtype=float)
        if k.shape != (n, n):
            raise ValueError(f"kernel table must be {n}x{n}, got {k.shape}")
    m = np.tril(k, -1) * grid.h
    m[np.diag_indices(n)] = 0.5 * grid.h * np.diag(k)
    return m


def _as_coeffs(grid: GridSpec, v) -> np.ndarray:
    if isinstance(v, L2Vec):
        _check_grid(v, L2Vec.zeros(grid))
        return v.coeffs
    return np.broadcast_to(np.asarray(v, dtype=float), (grid.n_cells,))


def builtin_operator(kind: str, grid: GridSpec, **params) -> L2Operator:
    """Construct one of the built-in operator families.

    ``identity``
        No parameters.
    ``multiplication``
        ``values``: scalar or step function.  A multiplier vanishing on some
        cell is flagged ``"singular"`` (with a warning), not rejected.
    ``volterra``
        ``kernel``: callable ``k(t, s)`` or table; see :func:`volterra_matrix`.
    ``perturbation``
        ``I + eps*K``; ``kernel`` is an :class:`L2Operator` or anything
        accepted by ``volterra``.
    ``complement_projection``
        Orthogonal projection onto the complement of ``v`` (default ``1``).
    """
    n = grid.n_cells
    if kind == "identity":
        return L2Operator(grid, np.eye(n), label="identity")
    if kind == "multiplication":
        vals = np.array(_as_coeffs(grid, params.get("values", 1.0)))
        flags = ()
        if np.any(vals == 0):
            warnings.warn("multiplier vanishes on a cell; operator is singular", stacklevel=2)
            flags = ("singular",)
        return L2Operator(grid, np.diag(vals), vals, label="multiplication", flags=flags)
    if kind == "volterra":
        return L2Operator(grid, volterra_matrix(grid, params["kernel"]), np.zeros(n), label="volterra")
    if kind == "perturbation":
        eps = float(params.get("eps", 0.0))
        K = params["kernel"]
        if not isinstance(K, L2Operator):
            K = builtin_operator("volterra", grid, kernel=K)
        _check_grid(K, L2Operator(grid, np.eye(n)))
        return L2Operator(grid, np.eye(n) + eps * K.matrix, 1.0 + eps * K.local,
                          label=f"I+{eps:g}*{K.label}")
    if kind == "complement_projection":
        v = _as_coeffs(grid, params.get("v", 1.0))
        nv = grid.h * float(v @ v)
        if nv == 0:
            raise ValueError("cannot project onto the complement of the zero vector")
        q = np.eye(n) - grid.h * np.outer(v, v) / nv
        return L2Operator(grid, q, label="complement_projection")
    raise ValueError(f"unknown operator kind {kind!r}")
