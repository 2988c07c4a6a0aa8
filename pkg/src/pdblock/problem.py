"""Problem model: smooth term, separable proximable terms, linear constraint.

A :class:`Problem` is ``min f(x) + sum_i g_i(x_i)  s.t.  A x = b`` with ``x``
split into blocks by a :class:`~pdblock.linalg.BlockPartition`. An
:class:`ExtendedProblem` adds a block ``y`` that appears only through a
smooth term ``h(y)`` and the constraint ``A x + B y = b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .linalg import BlockPartition

__all__ = [
    "DomainError",
    "UnsupportedTermError",
    "SmoothTerm",
    "QuadraticTerm",
    "BlockTerm",
    "SeparableTerm",
    "Problem",
    "ExtendedProblem",
    "objective",
    "prox_block",
    "kkt_residual",
    "kkt_residual_extended",
    "shift_strong_convexity",
    "problem_to_dict",
    "problem_from_dict",
    "dump_problem",
    "load_problem",
]

# Arguments of -log at or below this raise instead of producing inf.
LOG_DOMAIN_FLOOR = 1e-300


class DomainError(ValueError):
    """A point lies outside the domain of a term (e.g. log of a nonpositive value)."""


class UnsupportedTermError(ValueError):
    """A term combination without a closed-form proximal operator."""


# --------------------------------------------------------------------------
# smooth part


class SmoothTerm:
    """Smooth convex term given by value and gradient oracles.

    Parameters
    ----------
    value, grad : callable
        ``value(x) -> float`` and ``grad(x) -> ndarray``.
    lipschitz : float
        Lipschitz constant ``L_f`` of ``grad``.
    lipschitz_partial : callable, optional
        ``m -> L_m``, a uniform Lipschitz constant of the partial gradient
        over any ``m`` blocks. Defaults to ``L_f``, which is always valid.
    """

    kind = "generic"

    def __init__(self, value: Callable, grad: Callable, lipschitz: float,
                 lipschitz_partial: Optional[Callable] = None):
        self._value = value
        self._grad = grad
        self.lipschitz = float(lipschitz)
        self._partial = lipschitz_partial

    def value(self, x):
        return float(self._value(x))

    def grad(self, x):
        return np.asarray(self._grad(x), dtype=float)

    def block_grad(self, x, idx):
        """Partial gradient at ``x`` restricted to coordinate indices ``idx``."""
        return self.grad(x)[idx]

    def lipschitz_partial(self, m):
        if self._partial is None:
            return self.lipschitz
        return float(self._partial(m))

    def shifted(self, mu_f):
        """``f - (mu_f / 2) ||x||^2``."""
        value, grad = self._value, self._grad
        L = self.lipschitz
        part = self._partial
        return SmoothTerm(
            lambda x: value(x) - 0.5 * mu_f * float(np.dot(x, x)),
            lambda x: np.asarray(grad(x)) - mu_f * np.asarray(x),
            max(L - mu_f, 0.0),
            None if part is None else (lambda m: max(part(m) - mu_f, 0.0)),
        )


class QuadraticTerm(SmoothTerm):
    """``f(x) = 1/2 x^T Q x + c^T x`` with symmetric PSD ``Q`` (``None`` for linear).

    When a partition is given, ``L_m`` uses the bound
    ``min(L_f, m * max_i lambda_max(Q_ii))``, exact for ``m = 1`` and
    ``m = M``.
    """

    def __init__(self, Q, c, partition: Optional[BlockPartition] = None):
        self.c = np.asarray(c, dtype=float)
        n = self.c.shape[0]
        if Q is None or not np.any(Q):
            self.Q = None
            L = 0.0
            block_L = np.zeros(1)
        else:
            Q = np.asarray(Q, dtype=float)
            if Q.shape != (n, n):
                raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
            self.Q = 0.5 * (Q + Q.T)
            L = max(float(np.linalg.eigvalsh(self.Q)[-1]), 0.0)
            if partition is None:
                block_L = np.array([L])
            else:
                block_L = np.array([
                    max(float(np.linalg.eigvalsh(self.Q[partition.slice(i), partition.slice(i)])[-1]), 0.0)
                    for i in range(partition.M)
                ])
        self.partition = partition
        self.lipschitz = L
        self._block_L = block_L
        self._partial = None

    @property
    def kind(self):
        return "linear" if self.Q is None else "quadratic"

    @property
    def hessian(self):
        n = self.c.shape[0]
        return np.zeros((n, n)) if self.Q is None else self.Q

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = float(np.dot(self.c, x))
        if self.Q is not None:
            v += 0.5 * float(x @ (self.Q @ x))
        return v

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.Q is None:
            return self.c.copy()
        return self.Q @ x + self.c

    def block_grad(self, x, idx):
        if self.Q is None:
            return self.c[idx]
        if len(idx) == self.c.shape[0]:
            return self.Q @ x + self.c
        return self.Q[idx] @ x + self.c[idx]

    def lipschitz_partial(self, m):
        M = 1 if self.partition is None else self.partition.M
        if m >= M:
            return self.lipschitz
        return min(self.lipschitz, m * float(np.max(self._block_L)))

    def shifted(self, mu_f):
        n = self.c.shape[0]
        return QuadraticTerm(self.hessian - mu_f * np.eye(n), self.c, self.partition)


# --------------------------------------------------------------------------
# separable part


@dataclass(frozen=True)
class BlockTerm:
    """One block's term ``g_i``: a sum of closed-form-proximable kinds.

    ``g_i(z) = sum_j [-log_weight * log z_j + quad/2 * z_j^2]`` restricted to
    ``lower <= z <= upper``.
    """

    lower: float = -math.inf
    upper: float = math.inf
    log_weight: float = 0.0
    quad: float = 0.0

    def __post_init__(self):
        if self.log_weight < 0 or self.quad < 0:
            raise UnsupportedTermError("negative log weight or quadratic modulus is not convex")
        if self.lower > self.upper:
            raise UnsupportedTermError(f"empty box [{self.lower}, {self.upper}]")
        if self.log_weight > 0 and self.upper <= 0:
            raise UnsupportedTermError("neg-log term with upper bound <= 0 has empty domain")

    @classmethod
    def from_kinds(cls, kinds):
        """Build from a list of kind tags such as ``{"kind": "nonneg"}``.

        Supported tags: ``nonneg``, ``box`` (``l``, ``u``), ``neglog``
        (``weight``, optional ``upper``) and ``quadratic`` (``mu``).
        Indicator kinds intersect and quadratic/log weights add.
        """
        lo, hi, w, q = -math.inf, math.inf, 0.0, 0.0
        for spec in kinds:
            tag = spec.get("kind")
            if tag == "nonneg":
                lo = max(lo, 0.0)
            elif tag == "box":
                lo = max(lo, _bound(spec.get("l"), -math.inf))
                hi = min(hi, _bound(spec.get("u"), math.inf))
            elif tag == "neglog":
                w += float(spec.get("weight", 1.0))
                if spec.get("upper") is not None:
                    hi = min(hi, float(spec["upper"]))
            elif tag == "quadratic":
                q += float(spec["mu"])
            else:
                raise UnsupportedTermError(f"no closed-form prox for kind {tag!r}")
        return cls(lo, hi, w, q)

    def kinds(self):
        out = []
        if self.log_weight > 0:
            out.append({"kind": "neglog", "weight": self.log_weight,
                        "upper": None if math.isinf(self.upper) else self.upper})
            if self.lower > 0:
                out.append({"kind": "box", "l": self.lower, "u": None})
        elif self.lower == 0.0 and math.isinf(self.upper):
            out.append({"kind": "nonneg"})
        elif not (math.isinf(self.lower) and math.isinf(self.upper)):
            out.append({"kind": "box",
                        "l": None if math.isinf(self.lower) else self.lower,
                        "u": None if math.isinf(self.upper) else self.upper})
        if self.quad > 0:
            out.append({"kind": "quadratic", "mu": self.quad})
        return out


def _bound(v, default):
    return default if v is None else float(v)


class SeparableTerm:
    """Block-separable term ``g(x) = sum_i g_i(x_i)``.

    Per-coordinate parameter arrays are kept so that proximal steps over any
    set of blocks are a single vectorized closed-form evaluation.
    """

    def __init__(self, partition: BlockPartition, blocks):
        blocks = list(blocks)
        if len(blocks) != partition.M:
            raise ValueError(f"need {partition.M} block terms, got {len(blocks)}")
        self.partition = partition
        self.blocks = tuple(blocks)
        sizes = partition.sizes
        self.lo = np.repeat([b.lower for b in blocks], sizes).astype(float)
        self.hi = np.repeat([b.upper for b in blocks], sizes).astype(float)
        self.w = np.repeat([b.log_weight for b in blocks], sizes).astype(float)
        self.q = np.repeat([b.quad for b in blocks], sizes).astype(float)
        self._has_log = bool(np.any(self.w > 0))

    @classmethod
    def uniform(cls, partition, term: BlockTerm):
        return cls(partition, [term] * partition.M)

    @property
    def mu(self):
        """Strong convexity modulus from the quadratic parts (log parts ignored)."""
        return float(np.min(self.q))

    def is_smooth_term(self):
        """True when there is no indicator part (a log term's positivity is its domain)."""
        return bool(np.all(np.isinf(self.hi)) and np.all(np.isinf(self.lo) | (self.w > 0)))

    def with_quad(self, mu_f):
        return SeparableTerm(self.partition, [replace(b, quad=b.quad + mu_f) for b in self.blocks])

    def without_quad(self):
        return SeparableTerm(self.partition, [replace(b, quad=0.0) for b in self.blocks])

    def value(self, x, idx=None):
        x = np.asarray(x, dtype=float)
        lo, hi, w, q = self._params(idx)
        if np.any(x < lo) or np.any(x > hi):
            return math.inf
        v = 0.5 * float(np.dot(q * x, x))
        if self._has_log:
            mask = w > 0
            if np.any(x[mask] <= LOG_DOMAIN_FLOOR):
                raise DomainError("neg-log term evaluated at a nonpositive point")
            v -= float(np.dot(w[mask], np.log(x[mask])))
        return v

    def grad(self, x, idx=None):
        """Gradient; only valid for terms without indicator parts."""
        x = np.asarray(x, dtype=float)
        lo, hi, w, q = self._params(idx)
        if np.any(np.isfinite(lo) & (w == 0)) or np.any(np.isfinite(hi)):
            raise UnsupportedTermError("gradient requested for a term with an indicator part")
        if self._has_log and np.any(x[w > 0] <= LOG_DOMAIN_FLOOR):
            raise DomainError("neg-log gradient at a nonpositive point")
        out = q * x
        if self._has_log:
            mask = w > 0
            out[mask] -= w[mask] / x[mask]
        return out

    def prox(self, eta, v, idx=None):
        """``argmin_z g(z) + eta/2 ||z - v||^2`` over coordinates ``idx``."""
        if not eta > 0:
            raise ValueError(f"prox weight must be positive, got {eta}")
        v = np.asarray(v, dtype=float)
        lo, hi, w, q = self._params(idx)
        d = q + eta
        a = eta * v
        if self._has_log:
            s = np.sqrt(a * a + 4.0 * d * w)
            # pick the cancellation-free form of the positive root
            with np.errstate(divide="ignore", invalid="ignore"):
                root = np.where(a >= 0, (a + s) / (2.0 * d), 2.0 * w / (s - a))
            z = np.where(w > 0, root, a / d)
        else:
            z = a / d
        return np.minimum(np.maximum(z, lo), hi)

    def _params(self, idx):
        if idx is None:
            return self.lo, self.hi, self.w, self.q
        return self.lo[idx], self.hi[idx], self.w[idx], self.q[idx]


def prox_block(g: SeparableTerm, i: int, eta: float, v):
    """Exact minimizer of ``g_i(z) + eta/2 ||z - v||^2`` for block ``i``."""
    sl = g.partition.slice(i)
    idx = np.arange(sl.start, sl.stop)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != idx.shape[0]:
        raise ValueError(f"block {i} has length {idx.shape[0]}, got {v.shape[0]}")
    return g.prox(eta, v, idx)


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Problem:
    """``min f(x) + g(x)  s.t.  A x = b``."""

    partition: BlockPartition
    f: SmoothTerm
    g: SeparableTerm
    A: np.ndarray
    b: np.ndarray
    mu: Optional[float] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[1] != self.partition.n:
            raise ValueError(f"A has {A.shape[1]} columns, partition has {self.partition.n} entries")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, A has {A.shape[0]} rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.mu is None:
            object.__setattr__(self, "mu", self.g.mu)
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))

    @property
    def n(self):
        return self.partition.n

    @property
    def M(self):
        return self.partition.M

    def objective(self, x):
        return objective(self, x)

    def initial_point(self):
        """``x0`` if set, otherwise the origin projected onto the domain of ``g``."""
        if self.x0 is not None:
            return self.x0.copy()
        return self.g.prox(1.0, np.zeros(self.n))


@dataclass(frozen=True)
class ExtendedProblem:
    """``min f(x) + g(x) + h(y)  s.t.  A x + B y = b``.

    ``h`` is a smooth :class:`SeparableTerm` on a single block with modulus
    ``nu`` and gradient Lipschitz constant ``L_h`` (``inf`` if unbounded).
    """

    base: Problem
    h: SeparableTerm
    B: np.ndarray
    nu: float
    L_h: float = math.inf
    y0: Optional[np.ndarray] = None

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[0] != self.base.A.shape[0]:
            raise ValueError("A and B must have the same number of rows")
        if B.shape[1] != self.h.partition.n:
            raise ValueError("B columns do not match the y-block dimension")
        if not self.h.is_smooth_term():
            raise UnsupportedTermError("h must be differentiable on its domain")
        object.__setattr__(self, "B", B)
        if self.y0 is not None:
            object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float))

    @property
    def A(self):
        return self.base.A

    @property
    def b(self):
        return self.base.b

    def objective(self, x, y):
        return objective(self.base, x) + self.h.value(y)

    def prox_h(self, eta, v, a):
        """``argmin_y h(y) - <a, y> + eta/2 ||y - v||^2``."""
        return self.h.prox(eta, np.asarray(v) + np.asarray(a) / eta)

    def initial_point(self):
        x = self.base.initial_point()
        if self.y0 is not None:
            return x, self.y0.copy()
        return x, self.h.prox(1.0, self.b - self.A @ x)


def objective(p: Problem, x):
    """``F(x) = f(x) + g(x)``."""
    x = np.asarray(x, dtype=float)
    return p.f.value(x) + p.g.value(x)


def kkt_residual(p: Problem, x, lam, eta_probe=1.0):
    """Return ``(stationarity, feasibility)`` at ``(x, lam)``.

    Stationarity is the norm of the proximal-gradient mapping

        eta * || x - prox_g0(eta, x - (grad f(x) + q x - A^T lam) / eta) ||,

    where ``q`` is the quadratic part of ``g`` and ``g0`` the rest. Folding
    ``q`` into the gradient makes the value independent of how the
    quadratic is split between ``f`` and ``g``; it vanishes exactly at KKT
    points. Feasibility is ``||A x - b||``.
    """
    if not eta_probe > 0:
        raise ValueError("eta_probe must be positive")
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = p.f.grad(x) + p.g.q * x - p.A.T @ lam
    z = p.g.without_quad().prox(eta_probe, x - u / eta_probe)
    return eta_probe * float(np.linalg.norm(x - z)), float(np.linalg.norm(p.A @ x - p.b))


def kkt_residual_extended(ep: ExtendedProblem, x, y, lam, eta_probe=1.0):
    """KKT residual pair for the extended problem (x- and y-parts combined)."""
    base = ep.base
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = base.f.grad(x) + base.g.q * x - base.A.T @ lam
    zx = base.g.without_quad().prox(eta_probe, x - u / eta_probe)
    uy = ep.h.q * y - ep.B.T @ lam
    zy = ep.h.without_quad().prox(eta_probe, y - uy / eta_probe)
    stat = eta_probe * math.hypot(float(np.linalg.norm(x - zx)), float(np.linalg.norm(y - zy)))
    feas = float(np.linalg.norm(base.A @ x + ep.B @ y - base.b))
    return stat, feas


def shift_strong_convexity(p: Problem, mu_f: float) -> Problem:
    """Move ``mu_f/2 ||x||^2`` from ``f`` into every ``g_i``.

    The objective is unchanged pointwise; the modulus of ``g`` grows by ``mu_f``.
    """
    if mu_f < 0:
        raise ValueError("mu_f must be nonnegative")
    if mu_f == 0:
        return p
    return replace(p, f=p.f.shifted(mu_f), g=p.g.with_quad(mu_f), mu=p.mu + mu_f)


# --------------------------------------------------------------------------
# JSON


def _smooth_to_dict(f: SmoothTerm):
    if isinstance(f, QuadraticTerm):
        if f.Q is None:
            if not np.any(f.c):
                return {"kind": "zero"}
            return {"kind": "linear", "c": f.c.tolist()}
        return {"kind": "quadratic", "Q": f.Q.tolist(), "c": f.c.tolist()}
    raise TypeError("only quadratic, linear and zero smooth terms serialize")


def _smooth_from_dict(d, partition):
    kind = d["kind"]
    n = partition.n
    if kind == "zero":
        return QuadraticTerm(None, np.zeros(n), partition)
    if kind == "linear":
        return QuadraticTerm(None, d["c"], partition)
    if kind == "quadratic":
        return QuadraticTerm(np.asarray(d["Q"]), d["c"], partition)
    raise UnsupportedTermError(f"unknown smooth kind {kind!r}")


def problem_to_dict(p) -> dict:
    """Serialize a problem to the documented JSON layout."""
    base = p.base if isinstance(p, ExtendedProblem) else p
    d = {
        "sizes": list(base.partition.sizes),
        "smooth": _smooth_to_dict(base.f),
        "separable": [b.kinds() for b in base.g.blocks],
        "A": base.A.tolist(),
        "b": base.b.tolist(),
        "mu": base.mu,
    }
    if base.x0 is not None:
        d["x0"] = base.x0.tolist()
    if isinstance(p, ExtendedProblem):
        d["h"] = p.h.blocks[0].kinds()
        d["B"] = p.B.tolist()
        d["nu"] = p.nu
        d["Lh"] = None if math.isinf(p.L_h) else p.L_h
        if p.y0 is not None:
            d["y0"] = p.y0.tolist()
    return d


def problem_from_dict(d: dict):
    partition = BlockPartition(tuple(d["sizes"]))
    g = SeparableTerm(partition, [BlockTerm.from_kinds(k) for k in d["separable"]])
    base = Problem(
        partition,
        _smooth_from_dict(d["smooth"], partition),
        g,
        np.asarray(d["A"], dtype=float),
        np.asarray(d["b"], dtype=float),
        d.get("mu"),
        None if d.get("x0") is None else np.asarray(d["x0"]),
    )
    if "h" not in d:
        return base
    B = np.asarray(d["B"], dtype=float)
    ypart = BlockPartition((B.shape[1],))
    h = SeparableTerm(ypart, [BlockTerm.from_kinds(d["h"])])
    Lh = d.get("Lh")
    return ExtendedProblem(base, h, B, float(d["nu"]), math.inf if Lh is None else float(Lh),
                           None if d.get("y0") is None else np.asarray(d["y0"]))


def dump_problem(p, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh)


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
