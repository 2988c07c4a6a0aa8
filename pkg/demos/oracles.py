"""Two independent references for the same tiny QP."""

import numpy as np

from pdblock import QpSpec, gen_qp, long_run_reference, solve_qp_bruteforce

for seed in range(1, 6):
    p = gen_qp(QpSpec(n=6, p=1, L=10.0, blocks=3, seed=seed))
    exact = solve_qp_bruteforce(p)
    long = long_run_reference(p)
    active = int(np.sum(exact.x_star == 0))
    print(f"seed {seed}: {active} bounds active, F* = {exact.F_star:+.6f}, "
          f"|x_enum - x_run| = {np.linalg.norm(exact.x_star - long.x_star):.1e}")
