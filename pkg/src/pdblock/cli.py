"""``pdblock`` command line: gen, run, verify, rates, repro."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .generators import LogBarrierLpSpec, QpSpec, gen_logbarrier_lp, gen_qp
from .linalg import ConvergenceError
from .oracle import OracleSolution, long_run_reference, solve_qp_bruteforce
from .problem import DomainError, ExtendedProblem, UnsupportedTermError, dump_problem, load_problem
from .schedules import KINDS, ScheduleError, ScheduleParams, lp_preset_params, verify_conditions
from .solvers import LinearParams, run
from .trace import SCHEMA_VERSION, Trace

PRESETS = {
    "fig1": {"family": "qp", "L": 10.0},
    "fig2": {"family": "qp", "L": 100.0},
    "fig3": {"family": "qp", "L": 1000.0},
    "fig4": {"family": "lp"},
}
QP_FULL = {"n": 2000, "p": 200, "blocks": 40}
LP_FULL = {"p": 200, "n": 2000}
FIXED_BETAS = (1.0, 10.0, 100.0, 1000.0)
FIXED_ETA_OFFSET = 100.0
LP_BETA = 0.1
ENUM_MAX_N = 12


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing


def _default_seed():
    env = os.environ.get("PDBLOCK_SEED")
    return int(env) if env not in (None, "") else 0


def _add_problem_args(ap):
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--qp", action="store_true", help="random strongly convex QP")
    src.add_argument("--lp", action="store_true", help="random log-barrier LP")
    src.add_argument("--problem", help="problem JSON file")
    ap.add_argument("--n", type=int, help="primal dimension (QP: 200, LP: 200)")
    ap.add_argument("--p", type=int, help="constraint rows (QP: 20, LP: 50)")
    ap.add_argument("--L", type=float, default=10.0, help="QP condition number")
    ap.add_argument("--blocks", type=int, default=4, help="QP block count")
    ap.add_argument("--u", type=float, default=10.0, help="LP upper bound")
    ap.add_argument("--mu", type=float, help="strong convexity of g (LP default 1/u^2)")
    ap.add_argument("--nu", type=float, help="strong convexity of h (LP default 1/u^2)")
    ap.add_argument("--seed", type=int, default=_default_seed(), help="seed (env PDBLOCK_SEED)")


def _add_schedule_args(ap):
    ap.add_argument("--algo", choices=KINDS, default="rpdc-adaptive")
    ap.add_argument("--m", type=int, help="blocks updated per iteration (default: all)")
    ap.add_argument("--rho", type=float, default=1.0, help="adaptive rho >= 1")
    ap.add_argument("--beta", type=float, help="penalty for fixed / linear-variant schedules")
    ap.add_argument("--eta", type=float, help="fixed-schedule proximal weight")
    ap.add_argument("--theta", type=float, help="theta for schedule-only verification")
    ap.add_argument("--k0", type=float, help="override the derived k0")
    ap.add_argument("--lp-params", choices=("derived", "preset"), default="derived",
                    help="linear-variant parameters: rate-condition derived or experiment preset")
    ap.add_argument("--iters", type=int, default=2000)


def build_parser():
    ap = argparse.ArgumentParser(prog="pdblock", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance as JSON")
    _add_problem_args(g)
    g.add_argument("--out", help="output path (default stdout)")

    r = sub.add_parser("run", help="run a solver and write its trace")
    _add_problem_args(r)
    _add_schedule_args(r)
    r.add_argument("--out", help="trace path (default stdout)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")

    v = sub.add_parser("verify", help="check schedule conditions and certificate bounds")
    _add_problem_args(v)
    _add_schedule_args(v)
    v.add_argument("--Lf", type=float, default=1.0, help="L_f for schedule-only checks")
    v.add_argument("--Lm", type=float, help="L_m for schedule-only checks (default L_f)")
    v.add_argument("--norm-A", type=float, default=1.0, help="||A|| for schedule-only checks")
    v.add_argument("--seeds", type=int, default=dg.MC_MIN_SEEDS, help="seeds for theta < 1 checks")
    v.add_argument("--out", help="report path (default stdout)")

    t = sub.add_parser("rates", help="fit power and geometric rates")
    _add_problem_args(t)
    _add_schedule_args(t)
    t.add_argument("--trace", help="existing trace (CSV or JSON); otherwise run")
    t.add_argument("--column", default=None, help="trace column (default dist_sq / obj_gap)")
    t.add_argument("--window", type=float, nargs=2, metavar=("FIRST", "LAST"))
    t.add_argument("--out", help="report path (default stdout)")

    x = sub.add_parser("repro", help="rerun an experiment grid at a given scale")
    x.add_argument("--preset", required=True, help="fig1 | fig2 | fig3 | fig4")
    x.add_argument("--scale", type=float, default=0.1)
    x.add_argument("--iters", type=int, help="iterations per cell (QP 2000, LP 20000)")
    x.add_argument("--seed", type=int, default=_default_seed())
    x.add_argument("--mu", type=float, help="LP strong convexity (default 1/u^2)")
    x.add_argument("--out", default="repro", help="output directory")
    x.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


# --------------------------------------------------------------------------
# problems and references


def make_problem(args):
    if args.problem:
        return load_problem(args.problem), {"source": "file", "path": str(args.problem)}
    if args.lp:
        spec = LogBarrierLpSpec(p=args.p or 50, n=args.n or 200, u=args.u, seed=args.seed)
        ep = gen_logbarrier_lp(spec, mu=args.mu, nu=args.nu)
        desc = {"source": "lp", "p": spec.p, "n": spec.n, "u": spec.u, "seed": spec.seed,
                "mu": ep.base.mu, "nu": ep.nu,
                "mu_nu_heuristic": args.mu is None or args.nu is None}
        return ep, desc
    spec = QpSpec(n=args.n or 200, p=args.p or 20, L=args.L, blocks=args.blocks, seed=args.seed)
    return gen_qp(spec), {"source": "qp", "n": spec.n, "p": spec.p, "L": spec.L,
                          "blocks": spec.blocks, "seed": spec.seed}


def problem_fingerprint(p):
    h = hashlib.sha256()
    base = p.base if isinstance(p, ExtendedProblem) else p
    parts = [base.A, base.b, base.f.hessian, base.f.c, base.g.lo, base.g.hi, base.g.w, base.g.q,
             np.asarray(base.partition.sizes, dtype=float)]
    if isinstance(p, ExtendedProblem):
        parts += [p.B, p.h.lo, p.h.hi, p.h.w, p.h.q]
    for a in parts:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


def _enumerable(p):
    if isinstance(p, ExtendedProblem) or p.n > ENUM_MAX_N:
        return False
    g = p.g
    return bool(np.all(g.lo == 0) and np.all(np.isinf(g.hi)) and not np.any(g.w > 0))


def compute_reference(p):
    if _enumerable(p):
        return solve_qp_bruteforce(p, ENUM_MAX_N)
    return long_run_reference(p)


def cached_reference(p, cache_path=None):
    """Reference solution, reused from `cache_path` when the problem matches."""
    fp = problem_fingerprint(p)
    if cache_path is not None and Path(cache_path).exists():
        with open(cache_path) as fh:
            doc = json.load(fh)
        if doc.get("fingerprint") == fp:
            return OracleSolution.from_dict(doc["solution"])
    ref = compute_reference(p)
    if cache_path is not None:
        doc = {"schema": SCHEMA_VERSION, "fingerprint": fp, "solution": ref.to_dict()}
        Path(cache_path).parent.mkdir(parents=True, exist_ok=True)
        with open(cache_path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
    return ref


# --------------------------------------------------------------------------
# schedules


def make_schedule(p, args):
    base = p.base if isinstance(p, ExtendedProblem) else p
    m = base.M if args.m is None else args.m
    kw = {}
    if args.k0 is not None:
        kw["k0_override"] = args.k0
    if args.algo == "rpdc-adaptive":
        kw["rho_base"] = args.rho
    if args.algo in ("rpdc-fixed", "linear-variant"):
        if args.beta is None and args.algo == "rpdc-fixed":
            raise CliError("--beta is required for rpdc-fixed")
        kw["beta_base"] = LP_BETA if args.beta is None else args.beta
    if args.eta is not None:
        kw["eta_base"] = args.eta
    if args.algo in ("jacobi-accelerated",) and args.m not in (None, base.M):
        raise CliError("jacobi-accelerated updates every block; drop --m")
    if getattr(args, "mu", None) is not None and not isinstance(p, ExtendedProblem):
        kw["mu"] = args.mu
    if args.algo == "linear-variant" and not isinstance(p, ExtendedProblem):
        raise CliError("linear-variant needs a problem with a y-block (use --lp)")
    if args.algo != "linear-variant" and isinstance(p, ExtendedProblem):
        raise CliError(f"{args.algo} does not handle the y-block; use linear-variant")
    sp = ScheduleParams.from_problem(p, args.algo, m=m, **kw)
    lin = None
    if args.algo == "linear-variant" and args.lp_params == "preset":
        rho, ex, ey = lp_preset_params(sp.beta_base, sp.mu, sp.norm_A)
        lin = LinearParams(sp.beta_base, rho, ex, ey)
    return sp, lin


def schedule_only(args):
    kw = dict(kind=args.algo, theta=1.0 if args.theta is None else args.theta,
              mu=1.0 if args.mu is None else args.mu, L_f=args.Lf,
              L_m=args.Lf if args.Lm is None else args.Lm, norm_A=args.norm_A,
              rho_base=args.rho, k0_override=args.k0)
    if args.beta is not None:
        kw["beta_base"] = args.beta
    if args.eta is not None:
        kw["eta_base"] = args.eta
    return ScheduleParams(**kw)


# --------------------------------------------------------------------------
# commands


def _write(text, path):
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _sidecar(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def cmd_gen(args):
    p, desc = make_problem(args)
    if args.out:
        dump_problem(p, args.out)
    else:
        from .problem import problem_to_dict
        _write(json.dumps(problem_to_dict(p)), None)
    return 0


def _run_one(p, desc, sp, lin, iters, seed, out, fmt, ref_cache):
    ref = cached_reference(p, ref_cache)
    tr = run(p, sp.kind, sp, iters, seed=seed, ref=ref, lin_params=lin)
    tr.meta["problem_spec"] = desc
    tr.meta["reference"] = {"method": ref.method, "kkt": list(ref.kkt), "F_star": ref.F_star}
    if fmt == "json":
        _write(tr.to_json(), out)
    else:
        _write(tr.to_csv(), out)
        if out is not None:
            _write(json.dumps({"schema": SCHEMA_VERSION, **tr.meta}, sort_keys=True, indent=1),
                   _sidecar(out, ".meta.json"))
    return tr


def cmd_run(args):
    if args.iters < 0:
        raise CliError("--iters must be nonnegative")
    p, desc = make_problem(args)
    sp, lin = make_schedule(p, args)
    cache = None if args.out is None else _sidecar(args.out, ".ref.json")
    _run_one(p, desc, sp, lin, args.iters, args.seed, args.out, args.format, cache)
    return 0


def _condition_checks(report):
    return [dg.CheckReport(r.name, r.passed, r.worst_margin, r.to_dict()["tolerance"], r.worst_k, r.checked)
            for r in report.results]


def _run_checks(p, sp, lin, args):
    ref = compute_reference(p)
    t = args.iters
    checks = []
    if sp.kind == "jacobi-accelerated":
        tr, states = dg.collect_iterates(p, sp.kind, sp, t, seed=args.seed, ref=ref, stop_tol=None)
        ci = dg.CertificateInputs.from_run(p, sp, ref)
        checks.append(dg.check_jacobi_iterate_bound(p, ci, states))
        checks.append(_one_step_report(p, states, ref, sp, "jacobi"))
        checks += dg.check_ergodic_bound(ci, tr, "jacobi")
    elif sp.kind == "rpdc-adaptive":
        sp = replace(sp, budget_t=t)
        ci = dg.CertificateInputs.from_run(p, sp, ref)
        if sp.theta >= 1:
            tr, states = dg.collect_iterates(p, sp.kind, sp, t, seed=args.seed, ref=ref, stop_tol=None)
            checks.append(dg.check_adaptive_point_bound(ci, tr))
            checks.append(_one_step_report(p, states, ref, sp, "rpdc"))
            checks += dg.check_ergodic_bound(ci, tr, "adaptive")
        else:
            trs = [run(p, sp.kind, sp, t, seed=args.seed + s, ref=ref, stop_tol=None, keep_state=False)
                   for s in range(args.seeds)]
            checks.append(dg.check_adaptive_point_bound(ci, trs))
    elif sp.kind == "rpdc-fixed":
        if sp.theta >= 1:
            tr = run(p, sp.kind, sp, t, seed=args.seed, ref=ref, stop_tol=None)
            ci = dg.CertificateInputs.from_run(p, sp, ref)
            checks += dg.check_ergodic_bound(ci, tr, "fixed")
    else:
        tr = run(p, sp.kind, sp, t, seed=args.seed, ref=ref, lin_params=lin, stop_tol=None)
        for col in ("obj_gap", "feas"):
            try:
                fit = dg.fit_geometric_rate(tr, column=col)
                ok = fit.ratio < 1
                checks.append(dg.CheckReport(f"geometric-{col}", ok, 1 - fit.ratio, 0.0,
                                             details=fit.to_dict()))
            except ValueError as exc:
                checks.append(dg.CheckReport(f"geometric-{col}", False, -math.inf, 0.0,
                                             details={"error": str(exc)}))
    return checks


def _one_step_report(p, states, ref, sp, family):
    from .schedules import schedule_at
    worst, wk, n = math.inf, None, 0
    ok = True
    for pre, post in zip(states, states[1:]):
        for m in dg.check_one_iteration_inequality(p, pre, post, ref, schedule_at(sp, pre.k), algo=family):
            n += 1
            rel = m["margin"] / (1 + abs(m["rhs"]))
            ok &= m["passed"]
            if rel < worst:
                worst, wk = rel, pre.k
    return dg.CheckReport(f"one-step-{family}", bool(ok), worst, dg.BOUND_RTOL, wk, n)


def cmd_verify(args):
    problem_given = args.qp or args.lp or args.problem
    checks = []
    if problem_given:
        p, desc = make_problem(args)
        sp, lin = make_schedule(p, args)
    else:
        p, desc, lin = None, None, None
        sp = schedule_only(args)
    if sp.kind != "linear-variant":
        if args.iters < 1:
            raise CliError("--iters must be at least 1 for verification")
        checks += _condition_checks(verify_conditions(sp, args.iters))
    if problem_given:
        checks += _run_checks(p, sp, lin, args)
    extra = {"kind": sp.kind, "budget": args.iters, "schedule": sp.to_dict()}
    if desc is not None:
        extra["problem_spec"] = desc
    _write(dg.reports_to_json(checks, extra=extra), args.out)
    for c in checks:
        if not c.passed:
            print(f"FAIL {c.name}: margin {c.margin:.3e} at k={c.worst_k}", file=sys.stderr)
    return 0 if all(c.passed for c in checks) else 1


def cmd_rates(args):
    if args.trace:
        path = str(args.trace)
        tr = Trace.from_json(path) if path.endswith(".json") else Trace.from_csv(path)
    else:
        p, desc = make_problem(args)
        sp, lin = make_schedule(p, args)
        tr = run(p, sp.kind, sp, args.iters, seed=args.seed, ref=compute_reference(p), lin_params=lin)
    out = {"schema": SCHEMA_VERSION, "fits": {}}
    cols = [args.column] if args.column else ["dist_sq", "obj_gap", "feas"]
    window = None if args.window is None else tuple(args.window)
    for col in cols:
        for kind, fn in (("power", dg.fit_power_rate), ("geometric", dg.fit_geometric_rate)):
            try:
                out["fits"][f"{col}:{kind}"] = fn(tr, window, col).to_dict()
            except ValueError as exc:
                out["fits"][f"{col}:{kind}"] = {"error": str(exc)}
    _write(json.dumps(out, sort_keys=True, indent=1), args.out)
    return 0


def _scaled_blocks(n, full_blocks):
    for M in range(min(full_blocks, n), 0, -1):
        if n % M == 0:
            return M
    return 1


def repro_grid(preset, scale):
    """Problem spec and cell list for an experiment preset at ``scale``."""
    if preset not in PRESETS:
        raise CliError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    if not scale > 0:
        raise CliError("--scale must be positive")
    cfg = PRESETS[preset]
    if cfg["family"] == "qp":
        n = max(2, int(round(QP_FULL["n"] * scale)))
        p = max(1, int(round(QP_FULL["p"] * scale)))
        spec = {"family": "qp", "n": n, "p": p, "L": cfg["L"], "blocks": _scaled_blocks(n, QP_FULL["blocks"])}
        cells = [("adaptive", {"algo": "rpdc-adaptive"})]
        cells += [(f"beta{int(b)}", {"algo": "rpdc-fixed", "beta": b, "eta": FIXED_ETA_OFFSET + b})
                  for b in FIXED_BETAS]
        return spec, cells
    spec = {"family": "lp", "p": max(1, int(round(LP_FULL["p"] * scale))),
            "n": max(1, int(round(LP_FULL["n"] * scale))), "u": 10.0}
    return spec, [("linear", {"algo": "linear-variant", "beta": LP_BETA})]


def cmd_repro(args):
    spec, cells = repro_grid(args.preset, args.scale)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if spec["family"] == "qp":
        prob = gen_qp(QpSpec(spec["n"], spec["p"], spec["L"], spec["blocks"], args.seed))
        iters = args.iters or 2000
    else:
        prob = gen_logbarrier_lp(LogBarrierLpSpec(spec["p"], spec["n"], spec["u"], args.seed), mu=args.mu, nu=args.mu)
        iters = args.iters or 20000
    desc = {**spec, "seed": args.seed, "preset": args.preset, "scale": args.scale}
    cache = outdir / f"{args.preset}.ref.json"
    written = []
    for name, cell in cells:
        kw = {"beta_base": cell["beta"]} if "beta" in cell else {"rho_base": 1.0}
        if "eta" in cell:
            kw["eta_base"] = cell["eta"]
        sp = ScheduleParams.from_problem(prob, cell["algo"], **kw)
        lin = None
        if cell["algo"] == "linear-variant":
            rho, ex, ey = lp_preset_params(sp.beta_base, sp.mu, sp.norm_A)
            lin = LinearParams(sp.beta_base, rho, ex, ey)
        out = outdir / f"{args.preset}_{name}.{args.format}"
        _run_one(prob, desc, sp, lin, iters, args.seed, out, args.format, cache)
        written.append(out.name)
    manifest = {"schema": SCHEMA_VERSION, "preset": args.preset, "scale": args.scale,
                "problem_spec": desc, "iters": iters, "traces": written}
    _write(json.dumps(manifest, sort_keys=True, indent=1), outdir / f"{args.preset}_manifest.json")
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "verify": cmd_verify, "rates": cmd_rates, "repro": cmd_repro}
ERRORS = (CliError, ScheduleError, DomainError, UnsupportedTermError, ConvergenceError,
          ValueError, RuntimeError, OSError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ERRORS as exc:
        print(f"pdblock {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
