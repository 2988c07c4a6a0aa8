"""Parameter schedules for the three solvers and a numerical condition checker.

Recipes
-------
``jacobi-accelerated``
    ``beta_k = rho_k = k * beta`` and proximal weight ``eta_k = k * eta_P + L_f``
    with ``beta = mu / (4 ||A||^2)`` and ``eta_P = 3 mu / 8``.
``rpdc-fixed``
    Constant ``rho = theta * beta`` and ``eta = L_m + beta ||A||^2``.
``rpdc-adaptive``
    ``beta_k`` affine in ``k``, ``rho_k = theta beta_k / (6 - 5 theta)`` with a
    modified last step, ``eta_k = rho beta_k ||A||^2 + L_m``; needs the budget.
``linear-variant``
    Constant ``(rho, eta_x, eta_y)`` for the solver with a separate y-block.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

from .linalg import NORM_INFLATION, spectral_norm
from .problem import ExtendedProblem, Problem

__all__ = [
    "KINDS",
    "ScheduleError",
    "ScheduleParams",
    "IterParams",
    "ConditionResult",
    "ConditionReport",
    "jacobi_schedule",
    "rpdc_fixed_schedule",
    "rpdc_adaptive_schedule",
    "linear_variant_params",
    "lp_preset_params",
    "schedule_at",
    "verify_conditions",
]

KINDS = ("jacobi-accelerated", "rpdc-fixed", "rpdc-adaptive", "linear-variant")

PARAM_FLOOR = 1e-12
STRICT_MARGIN = 0.001
# relative slack for conditions that the recipes meet with equality
CONDITION_RTOL = 1e-12


class ScheduleError(ValueError):
    """Invalid schedule inputs."""


@dataclass(frozen=True)
class IterParams:
    beta_k: float
    rho_k: float
    eta_k: float


@dataclass(frozen=True)
class ScheduleParams:
    """Inputs of a schedule recipe.

    ``norm_A`` and ``norm_B`` enter the formulas as given; use
    :meth:`from_problem` to get estimated norms with the safety inflation.
    ``k0_override`` replaces the derived ``k0`` (for mutation tests).
    ``eta_base`` overrides the fixed-schedule ``eta``.
    """

    kind: str
    theta: float = 1.0
    mu: float = 0.0
    L_f: float = 0.0
    L_m: float = 0.0
    norm_A: float = 1.0
    norm_B: float = 1.0
    rho_base: float = 1.0
    beta_base: float = 1.0
    budget_t: Optional[int] = None
    nu: float = 0.0
    eta_base: Optional[float] = None
    k0_override: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if not 0 < self.theta <= 1:
            raise ScheduleError(f"theta must lie in (0, 1], got {self.theta}")

    @property
    def k0(self):
        if self.k0_override is not None:
            return float(self.k0_override)
        if self.kind == "jacobi-accelerated":
            return 2.0 * self.L_f / self.mu if self.mu > 0 else math.inf
        if self.kind == "rpdc-adaptive":
            if self.mu <= 0:
                return math.inf
            return 4.0 / self.theta + 2.0 * self.L_m / (self.theta * self.mu)
        return 0.0

    @classmethod
    def from_problem(cls, p, kind, m=None, **kw):
        """Fill theta, mu, L_f, L_m and inflated norms from problem data.

        Explicit keyword arguments win over derived values.
        """
        ep = p if isinstance(p, ExtendedProblem) else None
        base = ep.base if ep is not None else p
        M = base.M
        m = M if m is None else int(m)
        if not 1 <= m <= M:
            raise ScheduleError(f"m must lie in [1, {M}], got {m}")
        d = dict(
            kind=kind,
            theta=m / M,
            mu=base.mu,
            L_f=base.f.lipschitz,
            L_m=base.f.lipschitz_partial(m),
            norm_A=spectral_norm(base.A) * NORM_INFLATION,
        )
        if ep is not None:
            d["norm_B"] = spectral_norm(ep.B) * NORM_INFLATION
            d["nu"] = ep.nu
        d.update(kw)
        return cls(**d)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["k0"] = self.k0
        return d


def _floor(name, value):
    if not value > PARAM_FLOOR:
        warnings.warn(f"{name}={value!r} below positivity floor; using {PARAM_FLOOR}", RuntimeWarning)
        return PARAM_FLOOR
    return float(value)


def jacobi_schedule(sp: ScheduleParams, k: int) -> IterParams:
    """Accelerated Jacobian schedule at iteration ``k >= 1``."""
    if sp.mu <= 0:
        raise ScheduleError("accelerated schedule needs mu > 0")
    if sp.norm_A <= 0:
        raise ScheduleError("accelerated schedule needs a nonzero constraint matrix")
    if k < 1:
        raise ScheduleError("iterations are numbered from 1")
    beta = jacobi_base_beta(sp)
    return IterParams(k * beta, k * beta, k * jacobi_base_eta(sp) + sp.L_f)


def jacobi_base_beta(sp):
    return sp.mu / (4.0 * sp.norm_A ** 2)


def jacobi_base_eta(sp):
    return 3.0 * sp.mu / 8.0


def rpdc_fixed_schedule(sp: ScheduleParams) -> IterParams:
    if sp.beta_base <= 0:
        raise ScheduleError("fixed schedule needs beta > 0")
    beta = sp.beta_base
    rho = sp.theta * beta
    eta = sp.eta_base if sp.eta_base is not None else sp.L_m + beta * sp.norm_A ** 2
    return IterParams(beta, _floor("rho", rho), _floor("eta", eta))


def rpdc_adaptive_schedule(sp: ScheduleParams, k: int, t: Optional[int] = None) -> IterParams:
    """Adaptive schedule at iteration ``k`` of a run with budget ``t``."""
    t = sp.budget_t if t is None else t
    if t is None:
        raise ScheduleError("adaptive schedule needs the iteration budget")
    if not 1 <= k <= t:
        raise ScheduleError(f"iteration {k} outside 1..{t}")
    if sp.mu <= 0:
        raise ScheduleError("adaptive schedule needs mu > 0")
    if sp.rho_base < 1:
        raise ScheduleError("adaptive schedule needs rho >= 1")
    if sp.norm_A <= 0:
        raise ScheduleError("adaptive schedule needs a nonzero constraint matrix")
    th = sp.theta
    beta_k = _adaptive_beta(sp, k)
    if k < t:
        rho_k = th * beta_k / (6.0 - 5.0 * th)
    else:
        k0 = sp.k0
        rho_prev = th * _adaptive_beta(sp, t - 1) / (6.0 - 5.0 * th) if t > 1 else th * beta_k / (6.0 - 5.0 * th)
        rho_k = (t + k0 + 1) * rho_prev / (th * (t + k0 + 1) - 1)
    eta_k = sp.rho_base * beta_k * sp.norm_A ** 2 + sp.L_m
    return IterParams(beta_k, _floor("rho", rho_k), _floor("eta", eta_k))


def _adaptive_beta(sp, k):
    return sp.mu * (sp.theta * k + 2.0 + sp.theta) / (2.0 * sp.rho_base * sp.norm_A ** 2)


def linear_variant_params(sp: ScheduleParams):
    """``(rho, eta_x, eta_y)`` for the linearly convergent solver."""
    if sp.mu <= 0 or (sp.theta < 1 and sp.nu <= 0):
        raise ScheduleError("linear variant needs mu > 0 and nu > 0")
    if sp.beta_base <= 0:
        raise ScheduleError("linear variant needs beta > 0")
    beta, th = sp.beta_base, sp.theta
    nA2, nB2 = sp.norm_A ** 2, sp.norm_B ** 2
    rho = th * beta
    if th == 1:
        eta_x = beta * nA2 + sp.L_f
        eta_y = (1.0 + STRICT_MARGIN) * (beta + beta ** 2 / sp.mu) * nB2
    else:
        tau1 = beta / (th * sp.mu)
        tau2 = 2.0 * beta * (1.0 - th) / sp.nu
        eta_x = beta * (1.0 + (1.0 - th) * tau2) * nA2 + sp.L_m
        eta_y = (1.0 + STRICT_MARGIN) * beta * (1.0 + tau1) * nB2
    return _floor("rho", rho), _floor("eta_x", eta_x), _floor("eta_y", eta_y)


def lp_preset_params(beta, mu, norm_A):
    """Log-barrier LP preset: ``eta_x = beta ||A||^2``, ``eta_y = beta (1 + 2.001 beta / (3 mu))``."""
    return beta, beta * norm_A ** 2, beta * (1.0 + 2.001 * beta / (3.0 * mu))


def schedule_at(sp: ScheduleParams, k: int) -> IterParams:
    """Dispatch on ``sp.kind`` for the schedules with a per-iteration triple."""
    if sp.kind == "jacobi-accelerated":
        return jacobi_schedule(sp, k)
    if sp.kind == "rpdc-fixed":
        return rpdc_fixed_schedule(sp)
    if sp.kind == "rpdc-adaptive":
        return rpdc_adaptive_schedule(sp, k)
    raise ScheduleError(f"{sp.kind} has no per-iteration triple")


# --------------------------------------------------------------------------
# condition checking


@dataclass
class ConditionResult:
    name: str
    passed: bool = True
    worst_margin: float = math.inf
    worst_k: Optional[int] = None
    checked: int = 0

    def record(self, k, lhs, rhs):
        """Record ``lhs >= rhs`` at iteration ``k``; margin is relative."""
        scale = max(abs(lhs), abs(rhs), 1e-300)
        margin = (lhs - rhs) / scale
        self.checked += 1
        if margin < self.worst_margin:
            self.worst_margin, self.worst_k = margin, k
        if margin < -CONDITION_RTOL:
            self.passed = False

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": None if math.isinf(self.worst_margin) else self.worst_margin,
            "worst_k": self.worst_k,
            "tolerance": CONDITION_RTOL,
            "checked": self.checked,
        }


@dataclass
class ConditionReport:
    kind: str
    budget: int
    results: list = field(default_factory=list)

    @property
    def ok(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r.name for r in self.results if not r.passed]

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {"kind": self.kind, "budget": self.budget, "ok": self.ok,
                "conditions": [r.to_dict() for r in self.results]}


def verify_conditions(sp: ScheduleParams, t: int) -> ConditionReport:
    """Evaluate the rate conditions of the schedule for ``k <= t``.

    Matrix orderings are reduced to scalar inequalities using
    ``0 <= A^T A <= ||A||^2 I`` (checked at both ends of that interval).
    """
    if sp.kind == "rpdc-adaptive":
        return _verify_adaptive(replace(sp, budget_t=t), t)
    if sp.kind == "jacobi-accelerated":
        return _verify_jacobi(sp, t)
    if sp.kind == "rpdc-fixed":
        return _verify_fixed(sp, t)
    raise ScheduleError(f"no condition set for {sp.kind}")


def _verify_adaptive(sp, t):
    th, k0, Lm, mu = sp.theta, sp.k0, sp.L_m, sp.mu
    nA2 = sp.norm_A ** 2
    par = [None] + [rpdc_adaptive_schedule(sp, k, t) for k in range(1, t + 1)]
    beta = [None] + [p.beta_k for p in par[1:]]
    rho = [None] + [p.rho_k for p in par[1:]]
    eta = [None] + [p.eta_k for p in par[1:]]
    c = {f"cond{i}": ConditionResult(f"cond{i}") for i in range(1, 8)}
    for k in range(2, t + 1):
        c["cond1"].record(k, th * (k + k0 + 1), 1.0)
        c["cond2"].record(k, (beta[k - 1] - rho[k - 1]) * (k + k0), (1 - th) * (k + k0 + 1) * beta[k])
        if k <= t - 1:
            c["cond3"].record(k, (th * (k + k0 + 1) - 1) / rho[k - 1], (th * (k + k0 + 2) - 1) / rho[k])
        c["cond5"].record(k, beta[k] * (k + k0 + 1), beta[k - 1] * (k + k0))
        c["cond7"].record(k, (k + k0) * eta[k - 1] + mu * (th * (k + k0 + 1) - 1), (k + k0 + 1) * eta[k])
    if t >= 2:
        c["cond4"].record(t, (th * (t + k0 + 1) - 1) / rho[t - 1], (t + k0 + 1) / rho[t])
    for k in range(1, t + 1):
        c["cond6"].record(k, (k + k0 + 1) * (eta[k] - Lm), beta[k] * (k + k0 + 1) * nA2)
    return ConditionReport(sp.kind, t, list(c.values()))


def _verify_jacobi(sp, t):
    k0, mu, Lf = sp.k0, sp.mu, sp.L_f
    nA2 = sp.norm_A ** 2
    par = [None] + [jacobi_schedule(sp, k) for k in range(1, t + 1)]
    c1, c2, c3 = (ConditionResult(f"ajadmm-{i}") for i in (1, 2, 3))
    for k in range(1, t + 1):
        p = par[k]
        c1.record(k, p.rho_k, PARAM_FLOOR)
        c1.record(k, 2 * p.beta_k, p.rho_k)
        c1.record(k, p.eta_k, p.beta_k * nA2 + Lf)
    for k in range(2, t + 1):
        p, q = par[k], par[k - 1]
        c2.record(k, (k + k0) / q.rho_k, (k + k0 + 1) / p.rho_k)
        # (k+k0+1)(eta_k I - beta_k A^T A) <= (k+k0)((eta_{k-1} + mu) I - beta_{k-1} A^T A)
        # is affine in each eigenvalue s of A^T A; check s = 0 and s = ||A||^2
        for s in (0.0, nA2):
            c3.record(k, (k + k0) * (q.eta_k + mu - q.beta_k * s), (k + k0 + 1) * (p.eta_k - p.beta_k * s))
    return ConditionReport(sp.kind, t, [c1, c2, c3])


def _verify_fixed(sp, t):
    p = rpdc_fixed_schedule(sp)
    c1 = ConditionResult("rpdc-fixed-1")
    c2 = ConditionResult("rpdc-fixed-2")
    c1.record(1, sp.theta * p.beta_k, p.rho_k)
    c2.record(1, p.eta_k, sp.L_m + p.beta_k * sp.norm_A ** 2)
    return ConditionReport(sp.kind, t, [c1, c2])
