"""Primal-dual block solvers.

Three engines share one linearized proximal update of the augmented
Lagrangian ``F(x) - <lam, r> + beta/2 ||r||^2``:

* :func:`jacobi_step` updates every block from the same pre-step state.
* :func:`rpdc_step` updates a random subset of blocks.
* :func:`linear_variant_step` adds a separately updated smooth block ``y``
  that is refreshed with probability ``theta``.

:func:`run` drives any of them with a schedule and records a :class:`Trace`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .generators import seeded_rng
from .problem import ExtendedProblem, Problem, kkt_residual, kkt_residual_extended, objective
from .schedules import (
    KINDS,
    IterParams,
    ScheduleError,
    ScheduleParams,
    linear_variant_params,
    schedule_at,
)
from .trace import Trace

__all__ = [
    "SolverState",
    "LinearParams",
    "ERGODIC_MODES",
    "init_state",
    "jacobi_step",
    "rpdc_step",
    "linear_variant_step",
    "sample_blocks",
    "ergodic_average",
    "run",
    "RESIDUAL_REFRESH",
    "KKT_CHECK_EVERY",
]

RESIDUAL_REFRESH = 64
KKT_CHECK_EVERY = 16

# ergodic weighting matching each solver kind
ERGODIC_MODES = {
    "jacobi-accelerated": "jacobi",
    "rpdc-fixed": "fixed",
    "rpdc-adaptive": "adaptive",
}


@dataclass(frozen=True)
class LinearParams:
    """Constant parameters of the y-block solver."""

    beta: float
    rho: float
    eta_x: float
    eta_y: float


@dataclass(frozen=True)
class _Ergodic:
    """Online weighted sum of past iterates for one averaging mode."""

    mode: str
    k0: float
    theta: float
    num: Optional[np.ndarray] = None
    den: float = 0.0

    def push(self, k, x):
        """Fold in iterate ``x^k`` before it is replaced by ``x^{k+1}``."""
        if self.mode == "jacobi":
            w = k + self.k0 + 1.0
        elif k < 2:
            return self
        elif self.mode == "fixed":
            w = self.theta
        else:
            w = self.theta * (k + self.k0 + 1.0) - 1.0
        num = w * x if self.num is None else self.num + w * x
        return replace(self, num=num, den=self.den + w)

    def average(self, k, x):
        """Average at state counter ``k`` (so ``t = k - 1``) with current iterate ``x``."""
        t = k - 1
        if t < 1:
            raise ValueError("ergodic average needs at least one step")
        num = np.zeros_like(x) if self.num is None else self.num
        if self.mode == "jacobi":
            return num / self.den
        if self.mode == "fixed":
            return (x + num) / (1.0 + self.den)
        lead = t + self.k0 + 1.0
        return (lead * x + num) / (lead + self.den)


@dataclass
class SolverState:
    """Iterate ``(x, y, lam)``, residual ``r`` and counter ``k`` (starting at 1)."""

    x: np.ndarray
    lam: np.ndarray
    r: np.ndarray
    k: int = 1
    y: Optional[np.ndarray] = None
    rng: Optional[np.random.Generator] = None
    erg: Optional[_Ergodic] = None

    @property
    def erg_num(self):
        return None if self.erg is None else self.erg.num

    @property
    def erg_den(self):
        return 0.0 if self.erg is None else self.erg.den

    def copy(self):
        return replace(
            self,
            x=self.x.copy(),
            lam=self.lam.copy(),
            r=self.r.copy(),
            y=None if self.y is None else self.y.copy(),
        )


def _full_residual(p, x, y=None):
    if isinstance(p, ExtendedProblem):
        return p.A @ x + p.B @ y - p.b
    return p.A @ x - p.b


def init_state(p, sp: Optional[ScheduleParams] = None, seed=0, x0=None, y0=None, lam0=None):
    """Initial state with ``lam = 0`` and an exact residual."""
    if isinstance(p, ExtendedProblem):
        xs, ys = p.initial_point()
        x = xs if x0 is None else np.asarray(x0, dtype=float).copy()
        y = ys if y0 is None else np.asarray(y0, dtype=float).copy()
    else:
        x = p.initial_point() if x0 is None else np.asarray(x0, dtype=float).copy()
        y = None
    lam = np.zeros(p.b.shape[0]) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    erg = None
    if sp is not None and sp.kind in ERGODIC_MODES:
        erg = _Ergodic(ERGODIC_MODES[sp.kind], sp.k0, sp.theta)
    return SolverState(x, lam, _full_residual(p, x, y), 1, y, seeded_rng(seed), erg)


def _x_update(p: Problem, x, lam, r, idx, beta, eta):
    """Linearized proximal step on coordinates ``idx``; returns ``(x+, r + A_S d)``."""
    w = lam - beta * r
    if idx.shape[0] == p.n:
        u = p.f.block_grad(x, idx) - p.A.T @ w
        z = p.g.prox(eta, x - u / eta)
        return z, r + p.A @ (z - x)
    A_S = p.A[:, idx]
    u = p.f.block_grad(x, idx) - A_S.T @ w
    z = p.g.prox(eta, x[idx] - u / eta, idx)
    x_new = x.copy()
    x_new[idx] = z
    return x_new, r + A_S @ (z - x[idx])


def _advance(st, x, lam, r, y=None):
    erg = None if st.erg is None else st.erg.push(st.k, st.x)
    return SolverState(x, lam, r, st.k + 1, y, st.rng, erg)


def jacobi_step(p: Problem, st: SolverState, ip: IterParams, order=None) -> SolverState:
    """All blocks updated from the pre-step state, then ``lam+ = lam - rho_k r+``.

    With ``order`` the blocks are solved one by one in that order; every
    block reads the same snapshot and the residual is reduced over the
    assembled displacement in block-index order, so the result does not
    depend on ``order``.
    """
    if order is None:
        x, r = _x_update(p, st.x, st.lam, st.r, np.arange(p.n), ip.beta_k, ip.eta_k)
    else:
        order = list(order)
        if sorted(order) != list(range(p.M)):
            raise ValueError("order must be a permutation of the block indices")
        w = st.lam - ip.beta_k * st.r
        x = st.x.copy()
        for i in order:
            sl = p.partition.slice(i)
            idx = np.arange(sl.start, sl.stop)
            u = p.f.block_grad(st.x, idx) - p.A[:, sl].T @ w
            x[sl] = p.g.prox(ip.eta_k, st.x[sl] - u / ip.eta_k, idx)
        r = st.r + p.A @ (x - st.x)
    return _advance(st, x, st.lam - ip.rho_k * r, r, st.y)


def _check_subset(S, M, m=None):
    S = np.asarray(S, dtype=int).reshape(-1)
    if S.shape[0] == 0:
        raise ValueError("block subset must be nonempty")
    if np.unique(S).shape[0] != S.shape[0]:
        raise ValueError(f"duplicate block indices in {S.tolist()}")
    if S.min() < 0 or S.max() >= M:
        raise IndexError(f"block indices {S.tolist()} out of range for {M} blocks")
    if m is not None and S.shape[0] != m:
        raise ValueError(f"subset has {S.shape[0]} blocks, expected {m}")
    return np.sort(S)


def rpdc_step(p: Problem, st: SolverState, S, ip: IterParams, m=None) -> SolverState:
    """Update the blocks in ``S``; ``r+ = r + sum_{i in S} A_i (x_i+ - x_i)``."""
    return _rpdc_core(p, st, _check_subset(S, p.M, m), ip)


def _rpdc_core(p, st, S, ip):
    idx = p.partition.indices(S.tolist())
    x, r = _x_update(p, st.x, st.lam, st.r, idx, ip.beta_k, ip.eta_k)
    return _advance(st, x, st.lam - ip.rho_k * r, r, st.y)


def linear_variant_step(ep: ExtendedProblem, st: SolverState, S, coin: bool,
                        params: LinearParams, m=None) -> SolverState:
    """x-blocks in ``S``, then the y-block if ``coin``, then the multiplier."""
    return _linear_core(ep, st, _check_subset(S, ep.base.M, m), coin, params)


def _linear_core(ep, st, S, coin, params):
    base = ep.base
    idx = base.partition.indices(S.tolist())
    x, r_half = _x_update(base, st.x, st.lam, st.r, idx, params.beta, params.eta_x)
    if coin:
        a = ep.B.T @ (st.lam - params.beta * r_half)
        y = ep.prox_h(params.eta_y, st.y, a)
        r = r_half + ep.B @ (y - st.y)
    else:
        y, r = st.y, r_half
    return _advance(st, x, st.lam - params.rho * r, r, y)


def sample_blocks(rng: np.random.Generator, M: int, m: int):
    """Uniform ``m``-subset of ``range(M)`` by partial Fisher-Yates, sorted."""
    if not 1 <= m <= M:
        raise ValueError(f"m must lie in [1, {M}], got {m}")
    if m == M:
        return np.arange(M)
    perm = np.arange(M)
    for i in range(m):
        j = i + int(rng.integers(M - i))
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])


def ergodic_average(st: SolverState, mode: str):
    """Weighted average of the iterates so far for ``mode`` (jacobi, fixed, adaptive)."""
    if st.erg is None:
        raise ValueError("this run does not track an ergodic average")
    if mode != st.erg.mode:
        raise ValueError(f"run tracks the {st.erg.mode!r} average, not {mode!r}")
    return st.erg.average(st.k, st.x)


# --------------------------------------------------------------------------
# driver


def _blocks_per_step(M, theta):
    m = int(round(theta * M))
    if m < 1 or abs(m / M - theta) > 1e-12:
        raise ScheduleError(f"theta={theta} is not a multiple of 1/{M}")
    return m


def _value(p, x, y):
    if isinstance(p, ExtendedProblem):
        return p.objective(x, y)
    return objective(p, x)


def _dist_sq(ref, x, y):
    if ref is None:
        return math.nan
    d = float(np.sum((x - ref.x_star) ** 2))
    if y is not None and getattr(ref, "y_star", None) is not None:
        d += float(np.sum((y - ref.y_star) ** 2))
    return d


def _describe(p):
    base = p.base if isinstance(p, ExtendedProblem) else p
    d = {"n": base.n, "blocks": base.M, "rows": int(base.b.shape[0])}
    if isinstance(p, ExtendedProblem):
        d["y_dim"] = int(p.B.shape[1])
    return d


def run(p, algo: str, sp: ScheduleParams, t: int, seed=0, ref=None, stop_tol=1e-12,
        callback: Optional[Callable] = None, lin_params: Optional[LinearParams] = None,
        x0=None, y0=None, keep_state=True) -> Trace:
    """Run ``t`` iterations of ``algo`` and record one row per iterate.

    ``ref`` (an oracle solution with ``x_star``, ``F_star`` and optionally
    ``y_star``) enables the objective-gap and distance columns; without it
    they are NaN. Feasibility is always recomputed from scratch. The run
    stops early once both KKT residual components drop below `stop_tol`
    (checked every ``KKT_CHECK_EVERY`` iterations; ``None`` disables).

    ``callback(pre, post, params)`` is called after each step. The final
    state is attached as ``trace.state`` when `keep_state`.
    """
    if algo not in KINDS:
        raise ScheduleError(f"unknown algorithm {algo!r}")
    if sp.kind != algo:
        raise ScheduleError(f"schedule kind {sp.kind!r} does not match algorithm {algo!r}")
    if t < 0:
        raise ValueError("iteration budget must be nonnegative")
    extended = isinstance(p, ExtendedProblem)
    if extended != (algo == "linear-variant"):
        raise ScheduleError(f"{algo} cannot run on {type(p).__name__}")
    base = p.base if extended else p
    m = _blocks_per_step(base.M, sp.theta)
    if algo == "rpdc-adaptive" and sp.budget_t != t and t > 0:
        sp = replace(sp, budget_t=t)
    if algo == "linear-variant":
        if lin_params is None:
            rho, eta_x, eta_y = linear_variant_params(sp)
            lin_params = LinearParams(sp.beta_base, rho, eta_x, eta_y)

    st = init_state(p, sp, seed, x0, y0)
    meta = {
        "algo": algo,
        "schedule": sp.to_dict(),
        "seed": seed,
        "budget": t,
        "m": m,
        "problem": _describe(p),
    }
    if lin_params is not None:
        meta["linear_params"] = {k: getattr(lin_params, k) for k in ("beta", "rho", "eta_x", "eta_y")}
    trace = Trace(meta=meta)

    def record(s):
        fresh = _full_residual(p, s.x, s.y)
        gap = math.nan if ref is None else abs(_value(p, s.x, s.y) - ref.F_star)
        trace.append(s.k, gap, math.sqrt(float(np.dot(fresh, fresh))), _dist_sq(ref, s.x, s.y))
        if s.erg is not None and s.k >= 2:
            xb = s.erg.average(s.k, s.x)
            egap = math.nan if ref is None else abs(objective(base, xb) - ref.F_star)
            er = base.A @ xb - base.b
            trace.ergodic.append((s.k, egap, math.sqrt(float(np.dot(er, er)))))

    record(st)
    stopped = None
    for k in range(1, t + 1):
        pre = st
        if algo == "jacobi-accelerated":
            ip = schedule_at(sp, k)
            st = jacobi_step(base, st, ip)
        elif algo == "linear-variant":
            ip = lin_params
            S = sample_blocks(st.rng, base.M, m)
            coin = True if sp.theta >= 1 else bool(st.rng.random() < sp.theta)
            st = _linear_core(p, st, S, coin, ip)
        else:
            ip = schedule_at(sp, k)
            S = sample_blocks(st.rng, base.M, m)
            st = _rpdc_core(base, st, S, ip)
        if st.k % RESIDUAL_REFRESH == 0:
            st.r = _full_residual(p, st.x, st.y)
        if callback is not None:
            callback(pre, st, ip)
        record(st)
        if stop_tol is not None and k % KKT_CHECK_EVERY == 0:
            if extended:
                stat, feas = kkt_residual_extended(p, st.x, st.y, st.lam)
            else:
                stat, feas = kkt_residual(base, st.x, st.lam)
            if stat < stop_tol and feas < stop_tol:
                stopped = k
                break
    trace.meta["iterations"] = st.k - 1
    trace.meta["stopped_early"] = stopped
    if keep_state:
        trace.state = st
    return trace
