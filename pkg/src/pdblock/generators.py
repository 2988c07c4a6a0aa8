"""Seeded random instances: strongly convex QPs and log-barrier LPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import BlockPartition
from .problem import (
    BlockTerm,
    ExtendedProblem,
    Problem,
    QuadraticTerm,
    SeparableTerm,
    shift_strong_convexity,
)

__all__ = [
    "RNG_ALGORITHM",
    "NORMAL_METHOD",
    "QpSpec",
    "LogBarrierLpSpec",
    "seeded_rng",
    "gen_qp",
    "gen_logbarrier_lp",
    "haar_orthogonal",
]

RNG_ALGORITHM = "numpy-PCG64"
NORMAL_METHOD = "ziggurat"
Y_FLOOR = 0.1


def seeded_rng(seed) -> np.random.Generator:
    """Deterministic generator (PCG64, ziggurat normals) for ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class QpSpec:
    n: int
    p: int
    L: float = 10.0
    blocks: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.p >= self.n:
            raise ValueError(f"p={self.p} must be smaller than n={self.n}")
        if self.L < 1:
            raise ValueError("condition number L must be >= 1")
        if self.blocks < 1 or self.n % self.blocks:
            raise ValueError(f"{self.blocks} blocks do not divide n={self.n}")


@dataclass(frozen=True)
class LogBarrierLpSpec:
    p: int
    n: int
    u: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if not self.u > 0:
            raise ValueError("upper bound u must be positive")


def haar_orthogonal(rng, n):
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign fix."""
    G = rng.standard_normal((n, n))
    H, R = np.linalg.qr(G)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return H * s


def gen_qp(spec: QpSpec) -> Problem:
    """``min 1/2 x^T Q x + c^T x  s.t.  A x = b, x >= 0`` with spectrum of Q in [1, L].

    ``A = [B, I] / ||[B, I]||_2``. The returned problem carries the unit
    strong convexity in the separable part, so ``f`` has Hessian ``Q - I``.
    """
    rng = seeded_rng(spec.seed)
    n, p = spec.n, spec.p
    H = haar_orthogonal(rng, n)
    d = 1.0 + np.arange(n) * (spec.L - 1.0) / (n - 1)
    Q = (H * d) @ H.T
    Q = 0.5 * (Q + Q.T)
    c = rng.standard_normal(n)
    Bm = rng.standard_normal((p, n - p))
    A = np.hstack([Bm, np.eye(p)])
    A = A / np.linalg.norm(A, 2)
    b = rng.uniform(0.0, 1.0, p)
    part = BlockPartition.even(n, spec.blocks)
    g = SeparableTerm.uniform(part, BlockTerm(lower=0.0))
    raw = Problem(part, QuadraticTerm(Q, c, part), g, A, b, mu=0.0, x0=np.zeros(n))
    return shift_strong_convexity(raw, 1.0)


def gen_logbarrier_lp(spec: LogBarrierLpSpec, mu=None, nu=None) -> ExtendedProblem:
    """``min c^T x - sum log x - sum log y  s.t.  A x + y = b, x <= u``.

    ``mu`` and ``nu`` default to ``1/u^2``, a curvature lower bound of
    ``-log`` on ``(0, u]``; for ``y`` this is a heuristic since ``y`` has no
    upper bound.
    """
    rng = seeded_rng(spec.seed)
    p, n, u = spec.p, spec.n, float(spec.u)
    A = rng.standard_normal((p, n))
    c = rng.standard_normal(n)
    b = rng.uniform(0.5, 1.5, p)
    default = 1.0 / u ** 2
    mu = default if mu is None else float(mu)
    nu = default if nu is None else float(nu)
    part = BlockPartition((n,))
    g = SeparableTerm(part, [BlockTerm(upper=u, log_weight=1.0)])
    x0 = np.full(n, u / 2.0)
    base = Problem(part, QuadraticTerm(None, c, part), g, A, b, mu=mu, x0=x0)
    h = SeparableTerm(BlockPartition((p,)), [BlockTerm(log_weight=1.0)])
    y0 = np.maximum(b - A @ x0, Y_FLOOR)
    return ExtendedProblem(base, h, np.eye(p), nu, y0=y0)
