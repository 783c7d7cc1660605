"""Random streams and the dense linear-algebra kernels everything else uses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import IterationLimitExceeded
from .io import read_matrix, write_matrix

__all__ = [
    "SeededRng",
    "SvdResult",
    "svd",
    "least_squares",
    "pinv",
    "soft_threshold",
    "as_matrix",
    "read_matrix",
    "write_matrix",
]

EPS = np.finfo(float).eps


class SeededRng:
    """A reproducible random stream addressed by ``(master_seed, stream_id)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys,
    so two streams with different ids share no state and the same pair
    always replays the same sequence. :meth:`derive` appends further keys
    (for instance a sample index) to get a child stream.
    """

    def __init__(self, master_seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.path = (self.stream_id, *(int(k) for k in _path))
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def derive(self, *keys: int) -> "SeededRng":
        return SeededRng(self.master_seed, self.stream_id, (*self.path[1:], *keys))

    def fork(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.master_seed, stream_id)

    def __repr__(self):
        return f"SeededRng(master_seed={self.master_seed}, path={self.path})"

    # thin pass-throughs used across the package
    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, x):
        return self.generator.permutation(x)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(singular_values) @ v.T`` with ``r = min(m, n)``."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    sweeps: int = 0

    @property
    def rank_tol(self) -> float:
        if self.singular_values.size == 0:
            return 0.0
        m, n = self.u.shape[0], self.v.shape[0]
        return max(m, n) * EPS * float(self.singular_values[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def _complete_orthonormal(q: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace the columns of ``q`` not flagged ``good`` by an orthonormal completion."""
    q = q.copy()
    m = q.shape[0]
    basis = q[:, good]
    for j in np.flatnonzero(~good):
        # project every coordinate axis off the current basis (twice, for
        # orthogonality to working precision) and keep the longest remainder;
        # its norm is at least sqrt((m - k) / m) >= 1/sqrt(m)
        w = np.eye(m)
        for _ in range(2):
            w -= basis @ (basis.T @ w)
        nrm = np.linalg.norm(w, axis=0)
        pick = int(np.argmax(nrm))
        q[:, j] = w[:, pick] / nrm[pick]
        basis = np.column_stack([basis, q[:, j]])
    return q


def _svd_tall(a: np.ndarray, max_sweeps: int):
    m, n = a.shape
    fro = np.linalg.norm(a)
    w, v, sweeps = kernels.jacobi_orthogonalize(np.ascontiguousarray(a), m * EPS, max_sweeps)
    if sweeps < 0:
        raise IterationLimitExceeded(
            f"Jacobi SVD did not converge in {max_sweeps} sweeps for a {m}x{n} matrix"
        )
    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, w, v = sigma[order], w[:, order], v[:, order]
    good = sigma > max(m, n) * EPS * max(fro, np.finfo(float).tiny)
    u = np.zeros_like(w)
    u[:, good] = w[:, good] / sigma[good]
    if not good.all():
        u = _complete_orthonormal(u, good)
    return u, sigma, v, sweeps


def svd(a, max_sweeps: int = 80) -> SvdResult:
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Wide inputs are decomposed through their transpose, so the rotations
    always act on the shorter dimension.

    Raises IterationLimitExceeded when the sweeps do not settle.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m >= n:
        u, s, v, sweeps = _svd_tall(a, max_sweeps)
    else:
        v, s, u, sweeps = _svd_tall(a.T, max_sweeps)
    return SvdResult(u=u, singular_values=s, v=v, sweeps=sweeps)


def pinv(a, rcond: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through :func:`svd`."""
    res = svd(a)
    s = res.singular_values
    cutoff = res.rank_tol if rcond is None else rcond * (s[0] if s.size else 0.0)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (res.v * inv) @ res.u.T


def least_squares(a, b, rcond: float | None = None) -> np.ndarray:
    """Minimum-norm minimizer of ``||a x - b||_2``.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    Rank-deficient ``a`` is handled by truncating singular values below
    ``max(m, n) * eps * sigma_max``.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"rows of a ({a.shape[0]}) and b ({b.shape[0]}) differ")
    return pinv(a, rcond) @ b


def soft_threshold(v, theta):
    """``sign(v) * max(|v| - theta, 0)``; ``theta`` is a scalar or per-entry array."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)
