"""Randomized primal-dual block coordinate solvers for linearly constrained convex programs."""

from .diagnostics import (
    CertificateInputs,
    RateFit,
    adaptive_point_bound,
    check_adaptive_point_bound,
    check_ergodic_bound,
    check_jacobi_iterate_bound,
    check_one_iteration_inequality,
    collect_iterates,
    fit_geometric_rate,
    fit_power_rate,
    gap_and_feas,
)
from .generators import LogBarrierLpSpec, QpSpec, gen_logbarrier_lp, gen_qp, seeded_rng
from .linalg import BlockPartition, spectral_norm
from .oracle import OracleSolution, long_run_reference, solve_qp_bruteforce
from .problem import (
    BlockTerm,
    ExtendedProblem,
    Problem,
    QuadraticTerm,
    SeparableTerm,
    SmoothTerm,
    kkt_residual,
    objective,
)
from .schedules import ScheduleParams, linear_variant_params, lp_preset_params, schedule_at, verify_conditions
from .solvers import (
    LinearParams,
    SolverState,
    ergodic_average,
    jacobi_step,
    linear_variant_step,
    rpdc_step,
    run,
    sample_blocks,
)
from .trace import Trace

__version__ = "0.1.0"
