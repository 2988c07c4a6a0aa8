"""y-block variant on a log-barrier LP: a straight line on a log plot."""

from pdblock import (
    LinearParams,
    LogBarrierLpSpec,
    ScheduleParams,
    fit_geometric_rate,
    gen_logbarrier_lp,
    long_run_reference,
    lp_preset_params,
    run,
)

ep = gen_logbarrier_lp(LogBarrierLpSpec(p=50, n=200, u=10.0, seed=1))
ref = long_run_reference(ep)
sp = ScheduleParams.from_problem(ep, "linear-variant", beta_base=0.1)
lin = LinearParams(0.1, *lp_preset_params(0.1, sp.mu, sp.norm_A))
print(f"eta_x = {lin.eta_x:.2f}, eta_y = {lin.eta_y:.3f}")

tr = run(ep, "linear-variant", sp, 20_000, ref=ref, lin_params=lin)
for col in ("obj_gap", "feas"):
    fit = fit_geometric_rate(tr, column=col)
    print(f"{col:8s} contracts by {fit.ratio:.5f} per iteration (r^2 {fit.r_squared:.3f})")
print(f"after {len(tr) - 1} iterations: gap {tr.obj_gap[-1]:.2e}, feas {tr.feas[-1]:.2e}")
