"""Half the blocks per iteration: the distance bound holds for the seed average."""

import numpy as np

from pdblock import (
    CertificateInputs,
    QpSpec,
    ScheduleParams,
    adaptive_point_bound,
    check_adaptive_point_bound,
    gen_qp,
    long_run_reference,
    run,
)

p = gen_qp(QpSpec(n=40, p=8, L=10.0, blocks=8, seed=1))
ref = long_run_reference(p)
T = 500
sp = ScheduleParams.from_problem(p, "rpdc-adaptive", m=4, budget_t=T)
traces = [run(p, "rpdc-adaptive", sp, T, seed=s, ref=ref, stop_tol=None) for s in range(30)]

ci = CertificateInputs.from_run(p, sp, ref)
rep = check_adaptive_point_bound(ci, traces)
print(f"theta = {sp.theta}, 30 seeds, mean within bound (+20%): {rep.passed}")

mean = np.mean([tr.dist_sq for tr in traces], axis=0)
for t in (10, 100, T):
    print(f"  t={t:4d}  mean ||x - x*||^2 = {mean[t]:.3e}   bound = {adaptive_point_bound(ci, t):.3e}")
