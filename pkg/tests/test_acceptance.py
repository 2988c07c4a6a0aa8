"""Acceptance criteria 1-10, one PASS/FAIL line each in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from pdblock.cli import main
from pdblock.diagnostics import (
    CertificateInputs,
    check_adaptive_point_bound,
    check_jacobi_iterate_bound,
    check_one_iteration_inequality,
    collect_iterates,
    fit_geometric_rate,
    fit_power_rate,
)
from pdblock.generators import LogBarrierLpSpec, QpSpec, gen_logbarrier_lp, gen_qp, seeded_rng
from pdblock.oracle import long_run_reference, solve_qp_bruteforce
from pdblock.schedules import IterParams, ScheduleParams, jacobi_schedule, lp_preset_params, verify_conditions
from pdblock.solvers import LinearParams, init_state, jacobi_step, rpdc_step, run

T = 2000
BOUND_SLACK = 1e-8
DESK = dict(n=200, p=20, L=10.0, blocks=4)


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def jacobi_run(small_qp):
    p, ref = small_qp
    t0 = time.perf_counter()
    sp = ScheduleParams.from_problem(p, "jacobi-accelerated")
    tr, states = collect_iterates(p, "jacobi-accelerated", sp, T, ref=ref, stop_tol=None)
    ci = CertificateInputs.from_run(p, sp, ref)
    rep = check_jacobi_iterate_bound(p, ci, states, tol=BOUND_SLACK)
    return p, ref, sp, states, rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_instances():
    out = []
    for seed in range(1, 6):
        p = gen_qp(QpSpec(seed=seed, **DESK))
        out.append((p, long_run_reference(p)))
    return out


def test_criterion_1_jacobi_iterate_bound(jacobi_run):
    _, _, _, states, rep, secs = jacobi_run
    ok = rep.passed and rep.checked == T and secs < 30
    record(1, ok, f"worst relative margin {rep.margin:.3e} over t=1..{rep.checked}, {secs:.1f}s")


def test_criterion_2_one_iteration_inequality(jacobi_run):
    p, ref, sp, states, _, _ = jacobi_run
    worst, failures, checked = np.inf, 0, 0
    for k in range(1, len(states)):
        res = check_one_iteration_inequality(p, states[k - 1], states[k], ref, jacobi_schedule(sp, k),
                                             tol=BOUND_SLACK)
        for m in res:
            checked += 1
            failures += not m["passed"]
            worst = min(worst, m["margin"] / (1 + abs(m["rhs"])))
    ok = failures == 0 and checked == 3 * T
    record(2, ok, f"{checked} margins, {failures} below -1e-8(1+|rhs|), worst scaled {worst:.3e}")


def test_criterion_3_adaptive_point_bound(desk_qp):
    p, ref = desk_qp
    sp = ScheduleParams.from_problem(p, "rpdc-adaptive", m=4, rho_base=1.0, budget_t=T)
    tr = run(p, "rpdc-adaptive", sp, T, ref=ref, stop_tol=None)
    rep = check_adaptive_point_bound(CertificateInputs.from_run(p, sp, ref), tr, tol=BOUND_SLACK)
    record(3, rep.passed and rep.checked == T, f"worst relative margin {rep.margin:.3e} over {rep.checked} t")


@pytest.fixture(scope="module")
def rate_runs(desk_instances):
    t0 = time.perf_counter()
    rows = []
    for p, ref in desk_instances:
        sa = ScheduleParams.from_problem(p, "rpdc-adaptive", m=4, rho_base=1.0)
        ada = run(p, "rpdc-adaptive", sa, T, ref=ref, stop_tol=None)
        sf = ScheduleParams.from_problem(p, "rpdc-fixed", m=4, beta_base=1000.0)
        fix = run(p, "rpdc-fixed", sf, T, ref=ref, stop_tol=None)
        rows.append((ada, fix))
    return rows, time.perf_counter() - t0


def test_criterion_4_rate_exponent(rate_runs):
    rows, secs = rate_runs
    slopes = [fit_power_rate(ada, window=(T // 2, T)).exponent for ada, _ in rows]
    mean = float(np.mean(slopes))
    record(4, mean <= -1.5 and secs < 120,
           f"mean slope {mean:.2f} over seeds 1-5 (each {', '.join(f'{s:.2f}' for s in slopes)}), {secs:.1f}s")


def test_criterion_5_fixed_baseline(rate_runs):
    rows, _ = rate_runs
    pairs = [(fix.obj_gap[-1], ada.obj_gap[-1]) for ada, fix in rows]
    ok = all(f >= 10 * a for f, a in pairs)
    worst = min(f / a if a > 0 else np.inf for f, a in pairs)
    record(5, ok, f"fixed/adaptive final gap ratio >= {worst:.3g} (fixed gaps "
                  f"{', '.join(f'{f:.1e}' for f, _ in pairs)})")


def test_criterion_6_condition_suite():
    fails = []
    for theta in (0.05, 0.1, 0.25, 0.5, 1.0):
        for t in (10, 100, 1000):
            sp = ScheduleParams("rpdc-adaptive", theta=theta, mu=1.0, L_m=10.0, norm_A=1.0001, rho_base=1.0)
            rep = verify_conditions(sp, t)
            if not rep.ok or len(rep.results) != 7:
                fails.append((theta, t, rep.failures))
    mutated = verify_conditions(ScheduleParams("rpdc-adaptive", theta=0.5, mu=1.0, L_m=10.0, norm_A=1.0001,
                                               k0_override=0.0), 1000)
    ok = not fails and not mutated.ok
    record(6, ok, f"15 grid cells, {len(fails)} failing; k0=0 mutation fails {mutated.failures}")


def test_criterion_7_linear_convergence():
    t0 = time.perf_counter()
    lines, ok = [], True
    for seed in (1, 2, 3):
        ep = gen_logbarrier_lp(LogBarrierLpSpec(50, 200, 10.0, seed=seed))
        ref = long_run_reference(ep)
        sp = ScheduleParams.from_problem(ep, "linear-variant", beta_base=0.1)
        lin = LinearParams(0.1, *lp_preset_params(0.1, sp.mu, sp.norm_A))
        tr = run(ep, "linear-variant", sp, 20_000, ref=ref, lin_params=lin)
        g = fit_geometric_rate(tr, column="obj_gap")
        f = fit_geometric_rate(tr, column="feas")
        final = tr.feas[-1]
        ok &= g.ratio < 0.999 and f.ratio < 0.999 and g.r_squared >= 0.95 and f.r_squared >= 0.95 and final <= 1e-6
        lines.append(f"s{seed}: gap {g.ratio:.5f}/r2 {g.r_squared:.3f}, feas {f.ratio:.5f}/r2 {f.r_squared:.3f}, "
                     f"final feas {final:.1e}")
    secs = time.perf_counter() - t0
    record(7, ok and secs < 120, "; ".join(lines) + f"; {secs:.1f}s")


def test_criterion_8_oracle_equivalence():
    worst_run, worst_oracle = 0.0, 0.0
    for seed in range(1, 21):
        n = (2, 4, 6)[seed % 3]
        p = gen_qp(QpSpec(n, 1, 10.0, n // 2, seed=seed))
        enum = solve_qp_bruteforce(p)
        sp = ScheduleParams.from_problem(p, "rpdc-adaptive", rho_base=1.0)
        x = run(p, "rpdc-adaptive", sp, 5000, seed=seed, stop_tol=None).state.x
        worst_run = max(worst_run, float(np.max(np.abs(x - enum.x_star))))
        worst_oracle = max(worst_oracle, float(np.linalg.norm(long_run_reference(p).x_star - enum.x_star)))
    ok = worst_run <= 1e-4 and worst_oracle <= 1e-5
    record(8, ok, f"run vs enumeration {worst_run:.1e}, long run vs enumeration {worst_oracle:.1e}")


def test_criterion_9_full_subset_equivalence():
    p = gen_qp(QpSpec(24, 4, 10.0, 6, seed=9))
    rng = np.random.default_rng(2024)
    all_blocks = list(range(p.M))
    mismatches = 0
    for _ in range(100):
        st = init_state(p, x0=rng.uniform(0, 2, p.n))
        st.lam = rng.standard_normal(p.b.shape[0])
        st.r = st.r + rng.standard_normal(st.r.shape) * 1e-3
        ip = IterParams(*rng.uniform(0.1, 5, 2), float(rng.uniform(10, 50)))
        a, b = jacobi_step(p, st, ip), rpdc_step(p, st, all_blocks, ip)
        mismatches += not (np.array_equal(a.x, b.x) and np.array_equal(a.lam, b.lam) and np.array_equal(a.r, b.r))
    record(9, mismatches == 0, f"{mismatches} of 100 random states differ in any bit")


def test_criterion_10_cli_determinism(tmp_path):
    argv = ["run", "--algo", "rpdc-adaptive", "--qp", "--n", "200", "--p", "20", "--L", "10", "--blocks", "4",
            "--m", "2", "--rho", "1", "--iters", "2000", "--seed", "7"]
    outs = []
    for name in ("a", "b"):
        path = tmp_path / name / "trace.csv"
        assert main(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    record(10, outs[0] == outs[1] and outs[0].count(b"\n") == 2002,
           f"two runs, {len(outs[0])} bytes each, identical={outs[0] == outs[1]}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
