"""Convergence measurements, rate fits and numerical certificate checks.

The certificate checks evaluate closed-form upper bounds on the error of
a run from its starting point and a reference KKT pair, and compare them
with what the run actually achieved. Checks return a :class:`CheckReport`
whose margin is relative: ``(bound - measured) / scale``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import spectral_norm
from .problem import ExtendedProblem, objective
from .schedules import (
    ScheduleError,
    ScheduleParams,
    jacobi_base_beta,
    jacobi_base_eta,
    rpdc_adaptive_schedule,
    rpdc_fixed_schedule,
)
from .solvers import run
from .trace import SCHEMA_VERSION, Trace

__all__ = [
    "RateFit",
    "CertificateInputs",
    "CheckReport",
    "ScheduleViolation",
    "gap_and_feas",
    "fit_power_rate",
    "fit_geometric_rate",
    "certificate_phi1",
    "certificate_phi2",
    "certificate_phi3",
    "max_phi_on_ball",
    "dual_radius",
    "collect_iterates",
    "check_jacobi_iterate_bound",
    "check_one_iteration_inequality",
    "check_adaptive_point_bound",
    "adaptive_point_bound",
    "check_ergodic_bound",
    "reports_to_json",
    "BOUND_RTOL",
    "MC_SLACK",
    "MC_MIN_SEEDS",
    "BURN_IN",
]

BOUND_RTOL = 1e-8
MC_SLACK = 0.2
MC_MIN_SEEDS = 30
BURN_IN = 0.2


class ScheduleViolation(ScheduleError):
    """A weight matrix required to be PSD by the certificate is not."""


# --------------------------------------------------------------------------
# measurements


def gap_and_feas(p, x, ref, y=None):
    """``(|F(x) - F*|, ||A x (+ B y) - b||)``."""
    x = np.asarray(x, dtype=float)
    if isinstance(p, ExtendedProblem):
        if y is None:
            raise ValueError("extended problems need the y-block")
        y = np.asarray(y, dtype=float)
        return abs(p.objective(x, y) - ref.F_star), float(np.linalg.norm(p.A @ x + p.B @ y - p.b))
    return abs(objective(p, x) - ref.F_star), float(np.linalg.norm(p.A @ x - p.b))


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``log(value)`` against ``log(k)`` (power) or ``k`` (geometric)."""

    kind: str
    slope: float
    intercept: float
    r_squared: float
    window: tuple

    @property
    def exponent(self):
        return self.slope

    @property
    def ratio(self):
        return math.exp(self.slope)

    def to_dict(self):
        d = {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
             "r_squared": self.r_squared, "window": list(self.window)}
        d["exponent" if self.kind == "power" else "ratio"] = (
            self.exponent if self.kind == "power" else self.ratio)
        return d


def _series(data, column):
    if isinstance(data, Trace):
        if column in ("erg_gap", "erg_feas"):
            ks = np.asarray([row[0] for row in data.ergodic], dtype=float)
        else:
            ks = data.column("k").astype(float)
        return ks, data.column(column)
    if isinstance(data, tuple) and len(data) == 2:
        ks, vals = data
        return np.asarray(ks, dtype=float), np.asarray(vals, dtype=float)
    vals = np.asarray(data, dtype=float)
    return np.arange(1, vals.shape[0] + 1, dtype=float), vals


def _windowed(data, window, column):
    ks, vals = _series(data, column)
    lo, hi = (ks[0], ks[-1]) if window is None else window
    sel = (ks >= lo) & (ks <= hi)
    ks, vals = ks[sel], vals[sel]
    if ks.shape[0] < 2:
        raise ValueError(f"window {window} holds fewer than two points")
    if not np.all(vals > 0):
        raise ValueError("rate fits need positive values in the window")
    return ks, vals, (int(ks[0]), int(ks[-1]))


def _linfit(u, v, kind, window):
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(v ** 2))):
        r2 = 1.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return RateFit(kind, float(slope), float(intercept), r2, window)


def fit_power_rate(data, window=None, column="dist_sq") -> RateFit:
    """Slope of ``log(value)`` vs ``log(k)`` over ``window = (k_first, k_last)``.

    `data` is a :class:`Trace`, a ``(ks, values)`` pair, or a plain sequence
    indexed from ``k = 1``.
    """
    ks, vals, win = _windowed(data, window, column)
    return _linfit(np.log(ks), np.log(vals), "power", win)


def fit_geometric_rate(data, window=None, column="obj_gap", burn_in=BURN_IN) -> RateFit:
    """Slope of ``log(value)`` vs ``k``; ``ratio = exp(slope)``.

    Without an explicit window the first `burn_in` fraction of iterations
    is skipped.
    """
    if window is None:
        ks, _ = _series(data, column)
        window = (ks[0] + burn_in * (ks[-1] - ks[0]), ks[-1])
    ks, vals, win = _windowed(data, window, column)
    return _linfit(ks, np.log(vals), "geometric", win)


# --------------------------------------------------------------------------
# certificates


@dataclass
class CertificateInputs:
    """Reference pair, start point and first-iteration parameters of a run.

    The multiplier starts at zero, which the certificate formulas assume.
    """

    x_star: np.ndarray
    lam_star: np.ndarray
    F_star: float
    A: np.ndarray
    x1: np.ndarray
    r1: np.ndarray
    F1: float
    beta1: float
    rho1: float
    eta1: float
    k0: float
    theta: float
    mu: float
    L_m: float = 0.0
    beta: Optional[float] = None
    eta_P: Optional[float] = None
    rho: float = 1.0
    sp: Optional[ScheduleParams] = field(default=None, repr=False)
    norm_A: float = field(default=None, repr=False)

    def __post_init__(self):
        if self.norm_A is None:
            self.norm_A = spectral_norm(self.A)

    @classmethod
    def from_run(cls, p, sp: ScheduleParams, ref, x1=None):
        x1 = p.initial_point() if x1 is None else np.asarray(x1, dtype=float)
        r1 = p.A @ x1 - p.b
        kw = dict(x_star=np.asarray(ref.x_star), lam_star=np.asarray(ref.lam_star),
                  F_star=float(ref.F_star), A=p.A, x1=x1, r1=r1, F1=objective(p, x1),
                  k0=sp.k0, theta=sp.theta, mu=sp.mu, L_m=sp.L_m, sp=sp)
        if sp.kind == "jacobi-accelerated":
            beta, eta_P = jacobi_base_beta(sp), jacobi_base_eta(sp)
            return cls(beta1=beta, rho1=beta, eta1=eta_P + sp.L_f, beta=beta, eta_P=eta_P, **kw)
        if sp.kind == "rpdc-fixed":
            ip = rpdc_fixed_schedule(sp)
            return cls(beta1=ip.beta_k, rho1=ip.rho_k, eta1=ip.eta_k, beta=ip.beta_k, **kw)
        if sp.kind == "rpdc-adaptive":
            budget = sp.budget_t if sp.budget_t and sp.budget_t > 1 else 2
            ip = rpdc_adaptive_schedule(sp, 1, budget)
            return cls(beta1=ip.beta_k, rho1=ip.rho_k, eta1=ip.eta_k, rho=sp.rho_base, **kw)
        raise ScheduleError(f"no certificate for {sp.kind}")

    def rho1_for_budget(self, t):
        """``rho_1`` of an adaptive run with budget ``t`` (differs only for ``t = 1``)."""
        if self.sp is None or self.sp.kind != "rpdc-adaptive" or t != 1:
            return self.rho1
        return rpdc_adaptive_schedule(self.sp, 1, 1).rho_k


def _wnorm_sq(A, d, eta, beta):
    """``||d||^2_{eta I - beta A^T A}``."""
    Ad = A @ d
    return eta * float(np.dot(d, d)) - beta * float(np.dot(Ad, Ad))


def certificate_phi1(ci: CertificateInputs, x, lam):
    """Initial-condition quantity bounding the accelerated Jacobian iterates."""
    if ci.eta1 - ci.beta1 * ci.norm_A ** 2 < -1e-12 * ci.eta1:
        raise ScheduleViolation("eta_1 I - beta_1 A^T A is not positive semidefinite")
    lam = np.asarray(lam, dtype=float)
    d = ci.x1 - np.asarray(x, dtype=float)
    return ((ci.k0 + 2) / (2 * ci.rho1) * float(np.dot(lam, lam))
            + (ci.k0 + 2) / 2 * _wnorm_sq(ci.A, d, ci.eta1, ci.beta1))


def certificate_phi2(ci: CertificateInputs, x, lam, F_x=None):
    """Initial-condition quantity of the fixed-parameter randomized method."""
    lam = np.asarray(lam, dtype=float)
    d = ci.x1 - np.asarray(x, dtype=float)
    Fx = ci.F_star if F_x is None else F_x
    th = ci.theta
    return ((1 - th) * (ci.F1 - Fx) + ci.eta1 / 2 * float(np.dot(d, d))
            + th * float(np.dot(lam, lam)) / (2 * ci.rho1))


def certificate_phi3(ci: CertificateInputs, x, lam, F_x=None, rho1=None):
    """Initial-condition quantity of the adaptive randomized method."""
    lam = np.asarray(lam, dtype=float)
    d = ci.x1 - np.asarray(x, dtype=float)
    Fx = ci.F_star if F_x is None else F_x
    th, k0 = ci.theta, ci.k0
    rho1 = ci.rho1 if rho1 is None else rho1
    dd = float(np.dot(d, d))
    return ((1 - th) * (k0 + 2) * (ci.F1 - Fx + ci.beta1 * float(np.dot(ci.r1, ci.r1)) + ci.mu / 2 * dd)
            + ci.eta1 * (k0 + 2) / 2 * dd
            + (th * (k0 + 3) - 1) / (2 * rho1) * float(np.dot(lam, lam)))


def dual_radius(lam_star):
    n = float(np.linalg.norm(lam_star))
    return max(2 * n, 1 + n)


def max_phi_on_ball(ci: CertificateInputs, which, gamma=None, rho1=None):
    """``max_{||lam|| <= gamma} phi(x*, lam)``.

    Every certificate is ``const + c ||lam||^2`` with ``c > 0``, so the
    maximum sits on the sphere and equals ``phi(x*, 0) + c gamma^2``.
    """
    gamma = dual_radius(ci.lam_star) if gamma is None else gamma
    zero = np.zeros_like(ci.lam_star)
    if which == "phi1":
        base, c = certificate_phi1(ci, ci.x_star, zero), (ci.k0 + 2) / (2 * ci.rho1)
    elif which == "phi2":
        base, c = certificate_phi2(ci, ci.x_star, zero), ci.theta / (2 * ci.rho1)
    elif which == "phi3":
        r1 = ci.rho1 if rho1 is None else rho1
        base, c = certificate_phi3(ci, ci.x_star, zero, rho1=r1), (ci.theta * (ci.k0 + 3) - 1) / (2 * r1)
    else:
        raise ValueError(f"unknown certificate {which!r}")
    return base + c * gamma ** 2


# --------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    name: str
    passed: bool
    margin: float
    tolerance: float
    worst_k: Optional[int] = None
    checked: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        finite = math.isfinite(self.margin)
        return {"name": self.name, "passed": self.passed,
                "margin": self.margin if finite else None, "tolerance": self.tolerance,
                "worst_k": self.worst_k, "checked": self.checked, "details": self.details}


def reports_to_json(reports, path=None, extra=None):
    doc = {"schema": SCHEMA_VERSION, "ok": all(r.passed for r in reports),
           "checks": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    text = json.dumps(doc, sort_keys=True, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


class _Worst:
    def __init__(self):
        self.margin, self.k, self.n = math.inf, None, 0

    def add(self, k, margin):
        self.n += 1
        if margin < self.margin:
            self.margin, self.k = margin, k


# --------------------------------------------------------------------------
# guarantee checks


def collect_iterates(p, algo, sp, t, seed=0, ref=None, **kw):
    """Run and keep every iterate: returns ``(trace, states)`` with ``states[k-1]`` at counter ``k``."""
    states = []

    def keep(pre, post, ip):
        if not states:
            states.append(pre)
        states.append(post)

    tr = run(p, algo, sp, t, seed=seed, ref=ref, callback=keep, **kw)
    if not states:
        states.append(tr.state)
    return tr, states


def check_jacobi_iterate_bound(p, ci: CertificateInputs, states: Sequence, tol=BOUND_RTOL) -> CheckReport:
    """Accelerated Jacobian run: for every ``t``,

    ``max(beta ||r^{t+1}||^2, ||x^{t+1} - x*||^2_{P - beta A^T A}) <= 2 phi1(x*, lam*) / (t (t + k0 + 1))``

    with ``P = eta_P I`` and ``beta`` the base penalty.
    """
    if ci.beta is None or ci.eta_P is None:
        raise ValueError("certificate inputs do not come from the accelerated Jacobian schedule")
    phi = certificate_phi1(ci, ci.x_star, ci.lam_star)
    w = _Worst()
    for s in states[1:]:
        t = s.k - 1
        r = p.A @ s.x - p.b
        q = max(ci.beta * float(np.dot(r, r)), _wnorm_sq(p.A, s.x - ci.x_star, ci.eta_P, ci.beta))
        bound = 2 * phi / (t * (t + ci.k0 + 1))
        w.add(s.k, (bound - q) / max(bound, 1e-300))
    return CheckReport("jacobi-iterate-bound", bool(w.margin >= -tol), w.margin, tol, w.k, w.n, {"phi1": phi})


def _phi_terms(p, pre, post, x, lam, ip, mu, L_f):
    """One-iteration inequality for simultaneous updates: returns ``(lhs, rhs)``."""
    r_new = p.A @ post.x - p.b
    lhs = objective(p, post.x) - objective(p, x) - float(np.dot(lam, r_new))
    eta, beta, rho = ip.eta_k, ip.beta_k, ip.rho_k
    dl0, dl1, dl = lam - pre.lam, lam - post.lam, pre.lam - post.lam
    dual = (np.dot(dl0, dl0) - np.dot(dl1, dl1) + np.dot(dl, dl)) / (2 * rho)
    e1, e0, step = post.x - x, pre.x - x, post.x - pre.x
    primal = (_wnorm_sq(p.A, e1, eta + mu, beta) - _wnorm_sq(p.A, e0, eta, beta)
              + _wnorm_sq(p.A, step, eta - L_f, beta))
    rhs = float(dual) - beta * float(np.dot(r_new, r_new)) - 0.5 * primal
    return lhs, rhs


def check_one_iteration_inequality(p, pre, post, ref, ip, probe_lams=None, algo="jacobi",
                                   tol=BOUND_RTOL):
    """Margins ``rhs - lhs`` of the one-step inequality at ``x = x*``.

    ``algo="jacobi"`` checks the simultaneous-update inequality for each
    probe multiplier (default ``0, lam*, 2 lam*``). ``algo="rpdc"`` checks
    the randomized inequality, whose expectation is deterministic when all
    blocks are updated; it is evaluated at the new multiplier, so probes do
    not apply. Each margin passes when ``>= -tol (1 + |rhs|)``.
    """
    if post.k != pre.k + 1:
        raise ValueError(f"states at k={pre.k} and k={post.k} are not consecutive")
    x = np.asarray(ref.x_star, dtype=float)
    lam_star = np.asarray(ref.lam_star, dtype=float)
    mu, L_f = p.mu, p.f.lipschitz
    out = []
    if algo == "jacobi":
        probes = [np.zeros_like(lam_star), lam_star, 2 * lam_star] if probe_lams is None else probe_lams
        for j, lam in enumerate(probes):
            lhs, rhs = _phi_terms(p, pre, post, x, np.asarray(lam, dtype=float), ip, mu, L_f)
            out.append(_margin(j, lhs, rhs, tol))
    elif algo == "rpdc":
        r_new = p.A @ post.x - p.b
        e1, e0, step = post.x - x, pre.x - x, post.x - pre.x
        eta, beta, rho = ip.eta_k, ip.beta_k, ip.rho_k
        lhs = (objective(p, post.x) - objective(p, x) - float(np.dot(post.lam, r_new))
               + (beta - rho) * float(np.dot(r_new, r_new)) + mu / 2 * float(np.dot(e1, e1)))
        delta = 0.5 * (_wnorm_sq(p.A, e1, eta, beta) - _wnorm_sq(p.A, e0, eta, beta)
                       + _wnorm_sq(p.A, step, eta, beta))
        rhs = -(delta - p.f.lipschitz_partial(p.M) / 2 * float(np.dot(step, step)))
        out.append(_margin("new-multiplier", lhs, rhs, tol))
    else:
        raise ValueError(f"unknown inequality family {algo!r}")
    return out


def _margin(probe, lhs, rhs, tol):
    m = rhs - lhs
    return {"probe": probe, "lhs": lhs, "rhs": rhs, "margin": m,
            "passed": bool(m >= -tol * (1 + abs(rhs)))}


def adaptive_point_bound(ci: CertificateInputs, t):
    """Bound on ``E ||x^{t+1} - x*||^2`` for the adaptive schedule with budget ``t``."""
    if t < 1:
        raise ValueError("bound is stated for t >= 1")
    rho1 = ci.rho1_for_budget(t)
    phi = certificate_phi3(ci, ci.x_star, ci.lam_star, rho1=rho1)
    th, rho, mu = ci.theta, ci.rho, ci.mu
    denom = (t + ci.k0 + 1) * ((rho - 1) * mu / (2 * rho) * (th * t + th + 2) + 2 * mu + ci.L_m)
    return 2 * phi / denom


def check_adaptive_point_bound(ci: CertificateInputs, traces, tol=BOUND_RTOL,
                                slack=MC_SLACK, min_seeds=MC_MIN_SEEDS) -> CheckReport:
    """Compare measured ``||x^{t+1} - x*||^2`` with the adaptive point bound at every ``t``.

    At ``theta = 1`` pass a single trace; the check is deterministic. For
    ``theta < 1`` pass at least `min_seeds` traces; their mean is compared
    with the bound inflated by `slack`.
    """
    if isinstance(traces, Trace):
        traces = [traces]
    traces = list(traces)
    if ci.theta < 1 and len(traces) < min_seeds:
        raise ValueError(f"need at least {min_seeds} seeds for a randomized check, got {len(traces)}")
    n = min(len(tr) for tr in traces)
    d = np.mean([np.asarray(tr.dist_sq[:n]) for tr in traces], axis=0)
    ks = traces[0].k[:n]
    allowed = 0.0 if ci.theta >= 1 else slack
    w = _Worst()
    for j in range(1, n):
        t = ks[j] - 1
        bound = adaptive_point_bound(ci, t) * (1 + allowed)
        w.add(ks[j], (bound - d[j]) / max(bound, 1e-300))
    name = "adaptive-point-bound" + ("" if ci.theta >= 1 else "-mean")
    return CheckReport(name, bool(w.margin >= -tol), w.margin, tol, w.k, w.n,
                       {"seeds": len(traces), "slack": allowed})


def _ergodic_T(mode, t, k0, theta):
    if mode == "jacobi":
        return t * (t + 2 * k0 + 3) / 2
    if mode == "fixed":
        return 1 + theta * (t - 1)
    return (t + k0 + 1) + sum(theta * (k + k0 + 1) - 1 for k in range(2, t + 1))


def check_ergodic_bound(ci: CertificateInputs, trace: Trace, mode, tol=BOUND_RTOL):
    """Objective-gap and feasibility of the weighted average against ``max phi / T``."""
    which = {"jacobi": "phi1", "fixed": "phi2", "adaptive": "phi3"}[mode]
    scale = max(1.0, float(np.linalg.norm(ci.lam_star)))
    wg, wf = _Worst(), _Worst()
    sums = 0.0
    for k, gap, feas in trace.ergodic:
        t = k - 1
        if mode == "adaptive":
            if t >= 2:
                sums += ci.theta * (t + ci.k0 + 1) - 1
            T = (t + ci.k0 + 1) + sums
            phi = max_phi_on_ball(ci, which, rho1=ci.rho1_for_budget(t))
        else:
            T = _ergodic_T(mode, t, ci.k0, ci.theta)
            phi = max_phi_on_ball(ci, which)
        bg, bf = phi / T, phi / (T * scale)
        wg.add(k, (bg - gap) / max(bg, 1e-300))
        wf.add(k, (bf - feas) / max(bf, 1e-300))
    return [
        CheckReport(f"ergodic-gap-{mode}", bool(wg.margin >= -tol), wg.margin, tol, wg.k, wg.n),
        CheckReport(f"ergodic-feas-{mode}", bool(wf.margin >= -tol), wf.margin, tol, wf.k, wf.n),
    ]
