"""Containers, validation, and the symmetric-vectorization toolkit."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import lqrnac as L


def _random_sym(rng, m, scale=1.0):
    M = rng.standard_normal((m, m)) * scale
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------- containers


class TestProblemInstance:
    def test_accepts_lists_and_freezes(self):
        inst = L.ProblemInstance(
            A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=0.5
        )
        assert inst.d == 1 and inst.k == 1
        with pytest.raises(ValueError):
            inst.A[0, 0] = 2.0

    def test_rejects_nonsquare_a(self):
        with pytest.raises(ValueError, match="square"):
            L.ProblemInstance(
                A=[[1.0, 0.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=0.0
            )

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            L.ProblemInstance(
                A=np.eye(2) * 0.5,
                B=[[1.0]],  # wrong row count
                Q=np.eye(2),
                R=[[1.0]],
                Psi=np.eye(2),
                sigma=0.0,
            )

    def test_rejects_asymmetric_q(self):
        with pytest.raises(ValueError, match="symmetric"):
            L.ProblemInstance(
                A=np.eye(2) * 0.5,
                B=np.eye(2),
                Q=[[1.0, 0.5], [0.0, 1.0]],
                R=np.eye(2),
                Psi=np.eye(2),
                sigma=0.0,
            )

    def test_rejects_indefinite_r(self):
        with pytest.raises(ValueError, match="positive definite"):
            L.ProblemInstance(
                A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[-1.0]], Psi=[[1.0]], sigma=0.0
            )

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            L.ProblemInstance(
                A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=-0.1
            )

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            L.ProblemInstance(
                A=[[np.nan]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=0.0
            )

    def test_json_roundtrip(self, bench1):
        back = L.ProblemInstance.from_json(bench1.to_json())
        for name in ("A", "B", "Q", "R", "Psi"):
            np.testing.assert_array_equal(getattr(back, name), getattr(bench1, name))
        assert back.sigma == bench1.sigma

    def test_noise_covariance(self, bench1):
        np.testing.assert_allclose(bench1.noise_covariance(), [[2.0]])

    def test_cost_block(self, bench1):
        np.testing.assert_array_equal(bench1.cost_block(), np.eye(2))


class TestPolicyParams:
    def test_dims(self):
        pol = L.PolicyParams(np.zeros((2, 3)))
        assert pol.k == 2 and pol.d == 3

    def test_unstable_gain_is_representable(self):
        # stability is a query, not a construction invariant
        L.PolicyParams([[100.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            L.PolicyParams([[np.inf]])


class TestStateActionPair:
    def test_joint_stacking(self):
        z = L.StateActionPair(x=[1.0, 2.0], u=[3.0])
        np.testing.assert_array_equal(z.joint(), [1.0, 2.0, 3.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            L.StateActionPair(x=[np.nan], u=[0.0])


# ------------------------------------------------------------------ svec/smat


class TestSvecSmat:
    def test_known_packing(self):
        M = np.array([[1.0, 2.0], [2.0, 3.0]])
        v = L.svec(M)
        np.testing.assert_allclose(v, [1.0, 2.0 * math.sqrt(2.0), 3.0])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            L.svec([[0.0, 1.0], [0.0, 0.0]])

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError, match="triangular"):
            L.smat([1.0, 2.0, 3.0, 4.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**32 - 1))
    def test_roundtrip_and_isometry(self, m, seed):
        rng = np.random.default_rng(seed)
        M = _random_sym(rng, m)
        N = _random_sym(rng, m)
        np.testing.assert_allclose(L.smat(L.svec(M)), M, atol=1e-12)
        # isometry: packed inner product equals the Frobenius inner product
        assert L.svec(M) @ L.svec(N) == pytest.approx(np.sum(M * N), rel=1e-12, abs=1e-12)

    def test_dimension(self):
        assert L.feature_dim(2, 1) == 6
        assert L.feature_dim(1, 1) == 3
        assert L.svec(np.eye(4)).shape == (10,)


class TestSymKron:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**32 - 1))
    def test_defining_action(self, m, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((m, m))
        B = rng.standard_normal((m, m))
        S = _random_sym(rng, m)
        lhs = L.sym_kron(A, B) @ L.svec(S)
        rhs = L.svec(0.5 * (B @ S @ A.T + A @ S @ B.T))
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_identity_law(self):
        np.testing.assert_allclose(L.sym_kron(np.eye(3), np.eye(3)), np.eye(6), atol=1e-14)

    def test_eigenvalues_for_equal_operands(self):
        # eigenvalues of sym_kron(A, A) are products lambda_i * lambda_j, i <= j
        rng = np.random.default_rng(7)
        A = _random_sym(rng, 3)
        lam = np.linalg.eigvalsh(A)
        expect = sorted(lam[i] * lam[j] for i in range(3) for j in range(i, 3))
        got = sorted(np.linalg.eigvals(L.sym_kron(A, A)).real)
        np.testing.assert_allclose(got, expect, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            L.sym_kron(np.eye(2), np.eye(3))


# ------------------------------------------------------------------- features


class TestFeature:
    def test_matches_outer_product_bitwise(self):
        rng = np.random.default_rng(3)
        z = L.StateActionPair(x=rng.standard_normal(3), u=rng.standard_normal(2))
        f = L.feature(z)
        joint = z.joint()
        assert np.array_equal(f, L.svec(np.outer(joint, joint)))

    def test_feature_matrix_rows_bitwise(self):
        rng = np.random.default_rng(4)
        Z = rng.standard_normal((50, 4))
        F = L.feature_matrix(Z)
        assert F.shape == (50, 10)
        for i in range(0, 50, 7):
            row = L.feature(L.StateActionPair(x=Z[i, :2], u=Z[i, 2:]))
            assert np.array_equal(F[i], row)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_quadratic_form_identity(self, seed):
        # <feature(z), svec(S)> reproduces the joint quadratic form
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(2)
        u = rng.standard_normal(2)
        S = _random_sym(rng, 4)
        z = L.StateActionPair(x=x, u=u)
        joint = z.joint()
        assert L.feature(z) @ L.svec(S) == pytest.approx(joint @ S @ joint, rel=1e-10)

    def test_cost(self, bench1):
        z = L.StateActionPair(x=[2.0], u=[3.0])
        assert L.cost(bench1, z) == pytest.approx(13.0)
