"""Discrete white noise, integrator paths and pinned (bridge) paths.

Replicate ``r``, coordinate ``c`` of an experiment with master seed ``seed``
always draws from the stream ``SeedSequence(seed, spawn_key=(r, c))``, so a
replicate's noise does not depend on how replicates are batched or threaded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hilbert import GridMismatch, GridSpec, L2Operator, L2Vec, builtin_operator

__all__ = [
    "rng_stream",
    "NoiseSample",
    "GaussPath",
    "sample_noise",
    "pairing",
    "integrator_path",
    "covariance",
    "covariance_matrix",
    "bridge_path",
    "noise_block",
    "integrator_paths",
    "bridge_paths",
    "map_replicates",
]


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


@dataclass(frozen=True, eq=False)
class NoiseSample:
    """``n_cells`` iid standard normals; ``(f, xi) = sqrt(h) sum f_i z_i``."""

    grid: GridSpec
    z: np.ndarray
    seed: int
    replicate: int = 0
    component: int = 0

    def pairing(self, f: L2Vec) -> float:
        return pairing(f, self)


def sample_noise(grid: GridSpec, seed: int, replicate: int = 0, component: int = 0) -> NoiseSample:
    z = rng_stream(seed, replicate, component).standard_normal(grid.n_cells)
    z.flags.writeable = False
    return NoiseSample(grid, z, int(seed), replicate, component)


def pairing(f: L2Vec, noise: NoiseSample) -> float:
    if f.grid != noise.grid:
        raise GridMismatch("vector and noise live on different grids")
    return float(math.sqrt(noise.grid.h) * (f.coeffs @ noise.z))


@dataclass(frozen=True, eq=False)
class GaussPath:
    """Values at the ``n_cells + 1`` grid nodes; shape ``(n+1,)`` or ``(dim, n+1)``."""

    grid: GridSpec
    values: np.ndarray
    operator_id: str
    seed: int | None

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes


def integrator_path(A: L2Operator, noise: NoiseSample) -> GaussPath:
    """``x(t_k) = (A 1_[0,t_k], xi)`` at every node."""
    if A.grid != noise.grid:
        raise GridMismatch("operator and noise live on different grids")
    x = math.sqrt(A.grid.h) * (noise.z @ A.cumulative)
    return GaussPath(A.grid, x, A.label, noise.seed)


def covariance(A: L2Operator, s: float, t: float) -> float:
    i, j = A.grid.snap(s), A.grid.snap(t)
    G = A.cumulative
    return float(A.grid.h * G[:, i] @ G[:, j])


def covariance_matrix(A: L2Operator) -> np.ndarray:
    """Covariance of ``x`` at all nodes, ``(n+1) x (n+1)``."""
    G = A.cumulative
    return A.grid.h * G.T @ G


def bridge_path(a, noises: NoiseSample | Sequence[NoiseSample], dim: int | None = None) -> GaussPath:
    """``y(t) = w(t) - t w(1) + a t`` per coordinate, one noise per coordinate."""
    if isinstance(noises, NoiseSample):
        noises = [noises]
    a = np.atleast_1d(np.asarray(a, dtype=float))
    dim = dim or len(noises)
    if dim not in (1, 2) or len(noises) != dim or a.shape != (dim,):
        raise ValueError("need dim in {1, 2}, one noise and one endpoint coordinate per dimension")
    grid = noises[0].grid
    t = grid.nodes
    rows = []
    for c in range(dim):
        w = np.concatenate([[0.0], np.cumsum(noises[c].z)]) * math.sqrt(grid.h)
        y = w - t * w[-1] + a[c] * t
        y[0], y[-1] = 0.0, a[c]
        rows.append(y)
    values = rows[0] if dim == 1 else np.stack(rows)
    return GaussPath(grid, values, "bridge", noises[0].seed)


# ------------------------------------------------------------------ batching

def noise_block(grid: GridSpec, seed: int, reps: Sequence[int], component: int = 0) -> np.ndarray:
    """Stacked noises for the given replicate indices."""
    n = grid.n_cells
    out = np.empty((len(reps), n))
    for i, r in enumerate(reps):
        out[i] = rng_stream(seed, int(r), component).standard_normal(n)
    return out


def integrator_paths(A: L2Operator, seed: int, reps: Sequence[int], component: int = 0) -> np.ndarray:
    """Paths for replicates ``reps`` as rows of an array ``(len(reps), n+1)``."""
    Z = noise_block(A.grid, seed, reps, component)
    return math.sqrt(A.grid.h) * (Z @ A.cumulative)


def bridge_paths(a, grid: GridSpec, seed: int, reps: Sequence[int]) -> np.ndarray:
    """Bridge paths for replicates ``reps``, shape ``(len(reps), dim, n+1)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    t = grid.nodes
    out = np.empty((len(reps), len(a), grid.n_cells + 1))
    for c in range(len(a)):
        Z = noise_block(grid, seed, reps, component=c)
        w = np.zeros((len(reps), grid.n_cells + 1))
        np.cumsum(Z, axis=1, out=w[:, 1:])
        w *= math.sqrt(grid.h)
        out[:, c] = w - t[None, :] * w[:, -1:] + a[c] * t[None, :]
        out[:, c, -1] = a[c]
    return out


def map_replicates(fn: Callable[[np.ndarray], np.ndarray], reps: int, workers: int = 1,
                   chunk: int = 64) -> np.ndarray:
    """Apply ``fn`` to chunks of replicate indices and concatenate in order.

    Each replicate owns its RNG stream, so the result is the same for any
    ``workers`` and ``chunk``.
    """
    chunks = [np.arange(i, min(i + chunk, reps)) for i in range(0, reps, chunk)]
    if workers <= 1 or len(chunks) <= 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate(parts) if parts else np.empty(0)


def wiener(grid: GridSpec) -> L2Operator:
    return builtin_operator("identity", grid)
