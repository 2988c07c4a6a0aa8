import numpy as np
import pytest

from pdblock.generators import QpSpec, gen_qp
from pdblock.linalg import BlockPartition
from pdblock.oracle import long_run_reference
from pdblock.problem import BlockTerm, Problem, QuadraticTerm, SeparableTerm


@pytest.fixture(scope="session")
def small_qp():
    p = gen_qp(QpSpec(40, 8, 10.0, 8, seed=1))
    return p, long_run_reference(p)


@pytest.fixture(scope="session")
def desk_qp():
    p = gen_qp(QpSpec(200, 20, 10.0, 4, seed=1))
    return p, long_run_reference(p)


def scalar_problem(q=1.0, c=0.0, a=1.0, b=0.0, lower=-np.inf):
    """One coordinate: f = c x, g = q/2 x^2 on x >= lower, constraint a x = b."""
    part = BlockPartition((1,))
    g = SeparableTerm(part, [BlockTerm(lower=lower, quad=q)])
    return Problem(part, QuadraticTerm(None, [c], part), g, [[a]], [b])


def nonneg_qp(H, c, A, b, sizes=None):
    H = np.asarray(H, dtype=float)
    part = BlockPartition(tuple(sizes) if sizes else (1,) * H.shape[0])
    g = SeparableTerm.uniform(part, BlockTerm(lower=0.0))
    return Problem(part, QuadraticTerm(H, c, part), g, A, b)


# criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
