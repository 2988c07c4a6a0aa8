"""Adaptive penalties against the fixed-penalty baseline on one QP.

The fixed schedule with eta = 100 + beta is run for each beta in the
experiment grid; the adaptive schedule needs no tuning.
"""

from pdblock import QpSpec, ScheduleParams, gen_qp, long_run_reference, run

p = gen_qp(QpSpec(n=200, p=20, L=10.0, blocks=4, seed=1))
ref = long_run_reference(p)
T = 2000

sp = ScheduleParams.from_problem(p, "rpdc-adaptive", rho_base=1.0)
tr = run(p, "rpdc-adaptive", sp, T, ref=ref, stop_tol=None)
print(f"adaptive         final gap {tr.obj_gap[-1]:.2e}  feas {tr.feas[-1]:.2e}")

for beta in (1.0, 10.0, 100.0, 1000.0):
    sp = ScheduleParams.from_problem(p, "rpdc-fixed", beta_base=beta, eta_base=100.0 + beta)
    tr = run(p, "rpdc-fixed", sp, T, ref=ref, stop_tol=None)
    print(f"fixed beta={beta:<6g} final gap {tr.obj_gap[-1]:.2e}  feas {tr.feas[-1]:.2e}")
