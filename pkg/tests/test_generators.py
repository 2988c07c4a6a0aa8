import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdblock.generators import (
    NORMAL_METHOD,
    RNG_ALGORITHM,
    LogBarrierLpSpec,
    QpSpec,
    gen_logbarrier_lp,
    gen_qp,
    haar_orthogonal,
    seeded_rng,
)
from pdblock.problem import objective


def full_hessian(p):
    return p.f.hessian + np.diag(p.g.q)


class TestQp:
    @pytest.mark.parametrize("L", [1.0, 10.0, 100.0, 1000.0])
    def test_spectrum(self, L):
        p = gen_qp(QpSpec(60, 6, L, 6, seed=2))
        s = np.linalg.svd(full_hessian(p), compute_uv=False)
        assert s[-1] == pytest.approx(1.0, abs=1e-6)
        assert s[0] == pytest.approx(L, abs=1e-6 * L)

    def test_unit_norm_and_identity_block(self):
        p = gen_qp(QpSpec(50, 10, 10.0, 5, seed=0))
        assert np.linalg.norm(p.A, 2) == pytest.approx(1.0, abs=1e-6)
        tail = p.A[:, -10:]
        np.testing.assert_allclose(tail, np.eye(10) * tail[0, 0], atol=1e-15)
        # consistent system: solve on the identity block
        x = np.zeros(50)
        x[-10:] = p.b / tail[0, 0]
        assert np.linalg.norm(p.A @ x - p.b) <= 1e-12

    def test_identity_hessian(self):
        p = gen_qp(QpSpec(4, 1, 1.0, 1, seed=7))
        np.testing.assert_allclose(full_hessian(p), np.eye(4), atol=1e-14)

    def test_presplit(self):
        p = gen_qp(QpSpec(20, 4, 10.0, 4, seed=1))
        assert p.mu == 1.0 and np.all(p.g.q == 1.0) and np.all(p.g.lo == 0.0)
        assert np.linalg.eigvalsh(p.f.hessian)[0] >= -1e-10
        assert np.all(np.abs(p.b - 0.5) <= 0.5) and np.array_equal(p.x0, np.zeros(20))

    def test_purity(self):
        a, b = gen_qp(QpSpec(30, 5, 10.0, 3, seed=4)), gen_qp(QpSpec(30, 5, 10.0, 3, seed=4))
        assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)
        assert np.array_equal(a.f.Q, b.f.Q) and np.array_equal(a.f.c, b.f.c)
        assert not np.array_equal(a.A, gen_qp(QpSpec(30, 5, 10.0, 3, seed=5)).A)

    @pytest.mark.parametrize("kw", [dict(n=4, p=4), dict(n=1, p=1), dict(n=4, p=0), dict(n=4, p=1, L=0.5),
                                    dict(n=6, p=1, blocks=4)])
    def test_invalid_specs(self, kw):
        with pytest.raises(ValueError):
            QpSpec(**kw)

    def test_strong_convexity_certificate(self):
        p = gen_qp(QpSpec(30, 5, 50.0, 5, seed=8))
        H = full_hessian(p)
        rng = np.random.default_rng(0)
        for _ in range(100):
            x, z = rng.uniform(0, 3, 30), rng.uniform(0, 3, 30)
            sub = H @ x + p.f.c
            lhs = objective(p, z)
            rhs = objective(p, x) + sub @ (z - x) + 0.5 * np.sum((z - x) ** 2)
            assert lhs >= rhs - 1e-8


class TestLp:
    def test_structure(self):
        ep = gen_logbarrier_lp(LogBarrierLpSpec(20, 80, 10.0, seed=1))
        assert np.array_equal(ep.B, np.eye(20)) and np.linalg.norm(ep.B, 2) == 1.0
        assert ep.base.A.shape == (20, 80) and ep.base.M == 1
        assert np.all((ep.base.b >= 0.5) & (ep.base.b <= 1.5))
        assert np.array_equal(ep.base.x0, np.full(80, 5.0))
        assert np.all(ep.y0 >= 0.1)
        np.testing.assert_array_equal(ep.y0, np.maximum(ep.base.b - ep.base.A @ ep.base.x0, 0.1))
        assert ep.base.mu == ep.nu == pytest.approx(0.01)

    def test_full_size(self):
        ep = gen_logbarrier_lp(LogBarrierLpSpec(200, 2000, 10.0, seed=0))
        assert ep.base.A.shape == (200, 2000) and ep.B.shape == (200, 200)
        assert np.all(ep.base.g.hi == 10.0)

    def test_explicit_moduli(self):
        ep = gen_logbarrier_lp(LogBarrierLpSpec(3, 5, seed=0), mu=0.5, nu=0.25)
        assert ep.base.mu == 0.5 and ep.nu == 0.25

    def test_h_gradient(self):
        ep = gen_logbarrier_lp(LogBarrierLpSpec(4, 6, seed=0))
        y = np.ones(4)
        np.testing.assert_array_equal(ep.h.grad(y), -np.ones(4))
        eps = 1e-6
        fd = [(ep.h.value(y + eps * e) - ep.h.value(y - eps * e)) / (2 * eps) for e in np.eye(4)]
        np.testing.assert_allclose(fd, -np.ones(4), atol=1e-6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LogBarrierLpSpec(0, 4)
        with pytest.raises(ValueError):
            LogBarrierLpSpec(2, 4, u=0.0)


class TestRng:
    def test_identifiers(self):
        assert RNG_ALGORITHM == "numpy-PCG64" and NORMAL_METHOD == "ziggurat"

    def test_determinism(self):
        a, b = seeded_rng(123).random(1000), seeded_rng(123).random(1000)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, seeded_rng(124).random(1000))

    def test_normal_moments(self):
        z = seeded_rng(0).standard_normal(100_000)
        assert abs(z.mean()) <= 0.02 and abs(z.var() - 1.0) <= 0.05

    def test_uniform_range(self):
        u = seeded_rng(1).uniform(0.0, 1.0, 100_000)
        assert u.min() >= 0.0 and u.max() < 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_haar_orthogonal(self, seed, n):
        H = haar_orthogonal(seeded_rng(seed), n)
        np.testing.assert_allclose(H.T @ H, np.eye(n), atol=1e-12)
