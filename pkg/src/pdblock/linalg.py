"""Dense kernels, block partitions and weighted-norm primitives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "BlockPartition",
    "BlockDiagWeights",
    "ConvergenceError",
    "spectral_norm",
    "weighted_norm_sq",
    "delta_w",
    "residual",
    "block_apply",
    "NORM_INFLATION",
]

# Applied to estimated spectral norms before they enter parameter schedules.
NORM_INFLATION = 1.0001


class ConvergenceError(RuntimeError):
    """Raised when an iterative kernel does not converge.

    The last iterate is kept in ``estimate``.
    """

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous, disjoint decomposition of ``range(n)`` into blocks."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_offsets", np.concatenate([[0], np.cumsum(sizes)]))

    @classmethod
    def even(cls, n, M):
        if M < 1 or n % M:
            raise ValueError(f"{M} blocks do not divide dimension {n}")
        return cls((n // M,) * M)

    @property
    def n(self):
        return int(self._offsets[-1])

    @property
    def M(self):
        return len(self.sizes)

    @property
    def offsets(self):
        return self._offsets

    def slice(self, i):
        if not 0 <= i < self.M:
            raise IndexError(f"block index {i} out of range for {self.M} blocks")
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def indices(self, blocks):
        """Coordinate indices of the given blocks, in the order given."""
        if len(blocks) == self.M and all(b == i for i, b in enumerate(blocks)):
            return np.arange(self.n)
        return np.concatenate(
            [np.arange(self._offsets[b], self._offsets[b + 1]) for b in blocks]
        )

    def split(self, x):
        x = np.asarray(x)
        return [x[self.slice(i)] for i in range(self.M)]


@dataclass(frozen=True)
class BlockDiagWeights:
    """Block-diagonal weight matrix whose i-th block is ``weights[i] * I``."""

    partition: BlockPartition
    weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != self.partition.M:
            raise ValueError("one weight per block is required")
        if any(v < 0 for v in w):
            raise ValueError("block weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, partition, w):
        return cls(partition, (w,) * partition.M)

    def diagonal(self):
        return np.repeat(np.asarray(self.weights), self.partition.sizes)


def spectral_norm(A, tol=1e-10, max_iter=10_000):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is the normalized all-ones vector, so the result is
    reproducible. Iteration stops once the relative change of the estimate
    of ``||A||_2^2`` falls below `tol`.

    Raises
    ------
    ConvergenceError
        If `max_iter` iterations do not reach `tol`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.any(A):
        return 0.0
    n = A.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    w = A.T @ (A @ v)
    if not np.any(w):
        # all-ones start is orthogonal to the row space; use the heaviest column
        v = np.zeros(n)
        v[np.argmax(np.sum(A * A, axis=0))] = 1.0
        w = A.T @ (A @ v)
    est = float(np.linalg.norm(w))
    for _ in range(max_iter):
        v = w / est
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if abs(new - est) <= tol * new:
            return float(np.sqrt(new))
        est = new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        float(np.sqrt(est)),
    )


def _as_weight(W, n):
    """Return a dense matrix or a diagonal vector describing ``W``."""
    if isinstance(W, BlockDiagWeights):
        if W.partition.n != n:
            raise ValueError(f"weights cover {W.partition.n} entries, vector has {n}")
        return W.diagonal()
    if W is None:
        return np.ones(n)
    W = np.asarray(W, dtype=float)
    if W.ndim == 0:
        return np.full(n, float(W))
    if W.ndim == 1:
        if W.shape[0] != n:
            raise ValueError(f"diagonal weight of length {W.shape[0]} for vector of length {n}")
        return W
    if W.shape != (n, n):
        raise ValueError(f"weight matrix {W.shape} does not match vector length {n}")
    return W


def weighted_norm_sq(v, W=None):
    """``v^T W v``.

    `W` may be a :class:`BlockDiagWeights`, a dense square matrix, a
    diagonal given as a vector, a scalar multiple of identity, or ``None``
    for the identity.
    """
    v = np.asarray(v, dtype=float)
    Wm = _as_weight(W, v.shape[0])
    if Wm.ndim == 1:
        return float(np.dot(v * Wm, v))
    return float(v @ (Wm @ v))


def delta_w(v_plus, v_o, v, W=None):
    """Half of ``||v+ - v||_W^2 - ||vo - v||_W^2 + ||v+ - vo||_W^2``."""
    v_plus, v_o, v = (np.asarray(a, dtype=float) for a in (v_plus, v_o, v))
    if not v_plus.shape == v_o.shape == v.shape:
        raise ValueError("delta_w arguments must have equal shapes")
    return 0.5 * (
        weighted_norm_sq(v_plus - v, W)
        - weighted_norm_sq(v_o - v, W)
        + weighted_norm_sq(v_plus - v_o, W)
    )


def residual(A, x, b):
    """Constraint residual ``A x - b``."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[1] != x.shape[0] or A.shape[0] != b.shape[0]:
        raise ValueError(f"shapes {A.shape}, {x.shape}, {b.shape} are incompatible")
    return A @ x - b


def block_apply(A, part: BlockPartition, i: int, v_i: Sequence[float]):
    """``A_i v_i`` for the column block ``i`` of ``A``."""
    sl = part.slice(i)
    v_i = np.asarray(v_i, dtype=float)
    if v_i.shape[0] != sl.stop - sl.start:
        raise ValueError(f"block {i} has length {sl.stop - sl.start}, got {v_i.shape[0]}")
    return np.asarray(A, dtype=float)[:, sl] @ v_i
