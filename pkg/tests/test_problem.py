import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import nonneg_qp
from pdblock.linalg import BlockPartition
from pdblock.problem import (
    BlockTerm,
    DomainError,
    ExtendedProblem,
    Problem,
    QuadraticTerm,
    SeparableTerm,
    SmoothTerm,
    UnsupportedTermError,
    kkt_residual,
    kkt_residual_extended,
    load_problem,
    dump_problem,
    objective,
    problem_from_dict,
    problem_to_dict,
    prox_block,
    shift_strong_convexity,
)

KINDS = [
    BlockTerm(lower=0.0),
    BlockTerm(lower=0.0, quad=2.0),
    BlockTerm(lower=-1.0, upper=0.5),
    BlockTerm(log_weight=1.0),
    BlockTerm(log_weight=2.0, upper=3.0),
    BlockTerm(log_weight=1.0, quad=0.5),
    BlockTerm(quad=1.5),
]


def one_block(term, n=3):
    return SeparableTerm.uniform(BlockPartition((n,)), term)


class TestObjective:
    def test_zero_terms(self):
        part = BlockPartition((2,))
        p = Problem(part, QuadraticTerm(None, np.zeros(2), part), one_block(BlockTerm(), 2), np.eye(2), np.zeros(2))
        assert objective(p, np.array([3.0, -4.0])) == 0.0

    def test_half_norm_with_nonneg(self):
        p = nonneg_qp(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [0.0])
        assert objective(p, np.array([1.0, 2.0])) == pytest.approx(2.5)

    def test_qp_form(self):
        rng = np.random.default_rng(0)
        G = rng.standard_normal((4, 4))
        Q, c = G @ G.T, rng.standard_normal(4)
        p = nonneg_qp(Q, c, np.ones((1, 4)), [1.0])
        x = rng.uniform(0, 1, 4)
        assert objective(p, x) == pytest.approx(0.5 * x @ Q @ x + c @ x, rel=1e-12)

    def test_log_domain_error(self):
        g = one_block(BlockTerm(log_weight=1.0), 2)
        with pytest.raises(DomainError):
            g.value(np.array([1.0, 0.0]))

    def test_indicator_violation_is_infinite(self):
        g = one_block(BlockTerm(lower=0.0), 2)
        assert g.value(np.array([-1.0, 1.0])) == math.inf


class TestProx:
    def test_nonneg_projection(self):
        g = SeparableTerm.uniform(BlockPartition((2,)), BlockTerm(lower=0.0))
        for eta in (0.1, 1.0, 50.0):
            assert prox_block(g, 0, eta, [-1.0, 2.0]).tolist() == [0.0, 2.0]

    def test_nonneg_plus_quadratic(self):
        g = one_block(BlockTerm(lower=0.0, quad=2.0), 2)
        out = prox_block(g, 0, 3.0, [1.0, -1.0])
        np.testing.assert_allclose(out, [3.0 / 5.0, 0.0])

    def test_neglog_unit(self):
        g = one_block(BlockTerm(log_weight=1.0), 1)
        assert prox_block(g, 0, 1.0, [0.0])[0] == pytest.approx(1.0, rel=1e-15)

    def test_neglog_upper_bound(self):
        g = one_block(BlockTerm(log_weight=1.0, upper=10.0), 1)
        assert prox_block(g, 0, 1.0, [100.0])[0] == 10.0

    def test_neglog_formula(self):
        g = one_block(BlockTerm(log_weight=1.0, upper=10.0), 3)
        v, eta = np.array([-3.0, 0.5, 4.0]), 2.0
        expect = np.minimum(10.0, (v + np.sqrt(v ** 2 + 4 / eta)) / 2)
        np.testing.assert_allclose(prox_block(g, 0, eta, v), expect, rtol=1e-14)

    def test_neglog_large_negative_argument_is_accurate(self):
        g = one_block(BlockTerm(log_weight=1.0), 1)
        z = prox_block(g, 0, 1.0, [-1e8])[0]
        # root of z^2 - v z - 1 = 0 is about 1/|v|
        assert z == pytest.approx(1e-8, rel=1e-12)

    def test_box_clamp(self):
        g = one_block(BlockTerm(lower=-1.0, upper=0.5), 3)
        assert prox_block(g, 0, 1.0, [-3.0, 0.2, 9.0]).tolist() == [-1.0, 0.2, 0.5]

    def test_unsupported_kind(self):
        with pytest.raises(UnsupportedTermError):
            BlockTerm.from_kinds([{"kind": "l1"}])
        with pytest.raises(UnsupportedTermError):
            BlockTerm(log_weight=1.0, upper=-1.0)

    def test_nonpositive_eta(self):
        with pytest.raises(ValueError):
            one_block(BlockTerm(), 1).prox(0.0, np.zeros(1))

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(KINDS), st.floats(0.05, 20.0), st.lists(st.floats(-20, 20), min_size=3, max_size=3))
    def test_optimality(self, term, eta, v):
        g = one_block(term)
        v = np.asarray(v)
        z = g.prox(eta, v)
        assert np.all(z >= term.lower) and np.all(z <= term.upper)
        if term.log_weight > 0:
            assert np.all(z > 0)
        # derivative of the smooth 1-D part at z
        d = term.quad * z + eta * (z - v)
        if term.log_weight > 0:
            d = d - term.log_weight / z
        tol = 1e-9 * (1 + np.abs(eta * v) + np.abs(term.log_weight / np.maximum(z, 1e-300)))
        at_lo = z == term.lower
        at_hi = z == term.upper
        interior = ~(at_lo | at_hi)
        assert np.all(np.abs(d[interior]) <= tol[interior])
        assert np.all(d[at_lo] >= -tol[at_lo])
        assert np.all(d[at_hi] <= tol[at_hi])

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(KINDS), st.floats(0.05, 20.0),
           st.lists(st.floats(-20, 20), min_size=3, max_size=3),
           st.lists(st.floats(-20, 20), min_size=3, max_size=3))
    def test_firm_nonexpansive(self, term, eta, u, v):
        g = one_block(term)
        u, v = np.asarray(u), np.asarray(v)
        pu, pv = g.prox(eta, u), g.prox(eta, v)
        d = pu - pv
        assert float(d @ d) <= float(d @ (u - v)) + 1e-10
        assert np.linalg.norm(d) <= np.linalg.norm(u - v) + 1e-10


class TestSmoothTerms:
    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(1)
        G = rng.standard_normal((5, 5))
        f = QuadraticTerm(G @ G.T, rng.standard_normal(5))
        x, h = rng.standard_normal(5), 1e-6
        fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(5)])
        np.testing.assert_allclose(fd, f.grad(x), rtol=1e-5, atol=1e-6)

    def test_block_gradient_assembly(self):
        rng = np.random.default_rng(2)
        part = BlockPartition((2, 1, 3))
        G = rng.standard_normal((6, 6))
        f = QuadraticTerm(G @ G.T, rng.standard_normal(6), part)
        x = rng.standard_normal(6)
        full = f.grad(x)
        pieces = np.concatenate([f.block_grad(x, part.indices([i])) for i in range(part.M)])
        assert np.array_equal(pieces, full[part.indices(list(range(part.M)))]) or np.allclose(pieces, full, rtol=0, atol=1e-14)

    def test_partial_lipschitz(self):
        rng = np.random.default_rng(3)
        part = BlockPartition.even(8, 4)
        G = rng.standard_normal((8, 8))
        f = QuadraticTerm(G @ G.T, np.zeros(8), part)
        values = [f.lipschitz_partial(m) for m in range(1, 5)]
        assert all(v <= f.lipschitz + 1e-12 for v in values)
        assert values[-1] == f.lipschitz
        # exact for single blocks
        exact = max(np.linalg.eigvalsh(f.Q[part.slice(i), part.slice(i)])[-1] for i in range(4))
        assert values[0] == pytest.approx(exact)

    def test_generic_smooth_term(self):
        f = SmoothTerm(lambda x: float(np.sum(x ** 4)), lambda x: 4 * x ** 3, 12.0)
        x = np.array([1.0, -1.0])
        assert f.block_grad(x, np.array([1])).tolist() == [-4.0]
        assert f.lipschitz_partial(1) == 12.0
        s = f.shifted(2.0)
        assert s.value(x) == pytest.approx(2.0 - 2.0)
        assert s.grad(x).tolist() == [2.0, -2.0]

    def test_neglog_gradient(self):
        h = one_block(BlockTerm(log_weight=1.0), 3)
        y = np.ones(3)
        assert h.grad(y).tolist() == [-1.0, -1.0, -1.0]
        eps = 1e-6
        fd = (h.value(y + eps * np.eye(3)[0]) - h.value(y - eps * np.eye(3)[0])) / (2 * eps)
        assert fd == pytest.approx(-1.0, abs=1e-6)


class TestKKT:
    def test_oracle_point(self):
        p = nonneg_qp(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0])
        stat, feas = kkt_residual(p, np.array([0.5, 0.5]), np.array([0.5]))
        assert stat <= 1e-12 and feas <= 1e-12

    def test_feasible_without_multiplier(self):
        p = nonneg_qp(np.eye(2), [1.0, 1.0], [[1.0, 1.0]], [1.0])
        stat, feas = kkt_residual(p, np.array([0.5, 0.5]), np.zeros(1))
        assert stat > 0 and feas == 0.0

    def test_infeasible(self):
        p = nonneg_qp(np.eye(2), [0.0, 0.0], [[1.0, 2.0]], [1.0])
        x = np.array([1.0, 1.0])
        assert kkt_residual(p, x, np.zeros(1))[1] == pytest.approx(2.0)

    def test_extended_residual(self):
        part = BlockPartition((1,))
        base = Problem(part, QuadraticTerm(None, [0.0], part), SeparableTerm(part, [BlockTerm(quad=1.0)]),
                       [[1.0]], [2.0])
        h = SeparableTerm(BlockPartition((1,)), [BlockTerm(quad=1.0)])
        ep = ExtendedProblem(base, h, [[1.0]], 1.0)
        # x = y = 1, lam = 1 solves min x^2/2 + y^2/2 s.t. x + y = 2
        stat, feas = kkt_residual_extended(ep, np.ones(1), np.ones(1), np.ones(1))
        assert stat <= 1e-14 and feas == 0.0


class TestShift:
    def test_zero_shift(self):
        p = nonneg_qp(np.eye(2) * 2, [0.0, 0.0], [[1.0, 1.0]], [1.0])
        assert shift_strong_convexity(p, 0.0) is p

    def test_negative_shift(self):
        p = nonneg_qp(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0])
        with pytest.raises(ValueError):
            shift_strong_convexity(p, -1.0)

    def test_hessian_and_modulus(self):
        rng = np.random.default_rng(4)
        H, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        Q = H @ np.diag([1.0, 2.0, 3.0, 4.0]) @ H.T
        p = nonneg_qp(Q, np.zeros(4), np.ones((1, 4)), [1.0])
        s = shift_strong_convexity(p, 1.0)
        np.testing.assert_allclose(s.f.hessian, Q - np.eye(4), atol=1e-12)
        assert np.linalg.eigvalsh(s.f.hessian)[0] >= -1e-12
        assert s.mu == p.mu + 1.0
        assert np.all(s.g.q == 1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_pointwise_preservation(self, seed):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((4, 4))
        p = nonneg_qp(G @ G.T + np.eye(4), rng.standard_normal(4), rng.standard_normal((2, 4)), rng.standard_normal(2))
        s = shift_strong_convexity(p, 1.0)
        for _ in range(10):
            x, lam = rng.uniform(0, 2, 4), rng.standard_normal(2)
            assert objective(s, x) == pytest.approx(objective(p, x), rel=1e-12, abs=1e-12)
            np.testing.assert_allclose(kkt_residual(s, x, lam), kkt_residual(p, x, lam), rtol=1e-10, atol=1e-10)

    def test_kkt_points_preserved(self):
        from pdblock.oracle import solve_qp_bruteforce

        rng = np.random.default_rng(6)
        G = rng.standard_normal((5, 5))
        p = nonneg_qp(G @ G.T + 2 * np.eye(5), rng.standard_normal(5), rng.uniform(0.1, 1, (2, 5)), [1.0, 1.0])
        sol = solve_qp_bruteforce(p)
        s = shift_strong_convexity(p, 1.0)
        assert max(kkt_residual(s, sol.x_star, sol.lam_star)) <= 1e-9
        assert max(kkt_residual(p, sol.x_star, sol.lam_star)) <= 1e-9


class TestSerialization:
    def test_round_trip_plain(self, tmp_path):
        rng = np.random.default_rng(5)
        G = rng.standard_normal((4, 4))
        p = nonneg_qp(G @ G.T, rng.standard_normal(4), rng.standard_normal((2, 4)), rng.standard_normal(2), sizes=(2, 2))
        path = tmp_path / "p.json"
        dump_problem(p, path)
        q = load_problem(path)
        assert q.partition == p.partition and q.mu == p.mu
        np.testing.assert_array_equal(q.A, p.A)
        x = rng.uniform(0, 1, 4)
        assert objective(q, x) == objective(p, x)

    def test_round_trip_extended(self):
        part = BlockPartition((3,))
        base = Problem(part, QuadraticTerm(None, [1.0, 2.0, 3.0], part),
                       SeparableTerm(part, [BlockTerm(upper=10.0, log_weight=1.0)]),
                       np.ones((2, 3)), [1.0, 1.0], mu=0.01, x0=np.full(3, 5.0))
        ep = ExtendedProblem(base, SeparableTerm(BlockPartition((2,)), [BlockTerm(log_weight=1.0)]), np.eye(2), 0.01,
                             y0=np.ones(2))
        d = problem_to_dict(ep)
        assert set(d) >= {"sizes", "smooth", "separable", "A", "b", "mu", "h", "B", "nu", "Lh"}
        q = problem_from_dict(d)
        assert isinstance(q, ExtendedProblem)
        assert q.L_h == math.inf and q.nu == 0.01
        np.testing.assert_array_equal(q.y0, ep.y0)
        x, y = np.array([1.0, 2.0, 3.0]), np.array([0.5, 2.0])
        assert q.objective(x, y) == ep.objective(x, y)

    def test_kinds_round_trip(self):
        for term in KINDS:
            assert BlockTerm.from_kinds(term.kinds()) == term
