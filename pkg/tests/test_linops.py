import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pnkit.errors import ResourceLimitError
from pnkit.linops import (
    DenseOperator,
    IdentityOperator,
    KroneckerOperator,
    ScalingOperator,
    SymmetricKroneckerOperator,
    aslinop,
    to_dense,
)


def _vec(X):
    return X.flatten(order="F")


class TestApply:
    def test_identity(self):
        op = IdentityOperator(3)
        v = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(op.apply(v), v)

    def test_scaling(self):
        op = ScalingOperator(2, 2.5)
        np.testing.assert_allclose(op.apply(np.array([1.0, -1.0])), [2.5, -2.5])

    def test_dense_oracle(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((8, 8))
        op = DenseOperator(A)
        for _ in range(5):
            v = rng.standard_normal(8)
            assert np.max(np.abs(op.apply(v) - A @ v)) <= 1e-14 * np.max(np.abs(A @ v))

    def test_dimension_mismatch(self):
        op = DenseOperator(np.ones((2, 3)))
        with pytest.raises(ValueError):
            op.apply(np.ones(2))

    def test_matmul_matrix_columnwise(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((3, 4))
        B = rng.standard_normal((4, 2))
        np.testing.assert_allclose(DenseOperator(A) @ B, A @ B, atol=1e-14)


class TestCombinators:
    def test_composition_dense_oracle(self):
        rng = np.random.default_rng(2)
        A, B = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
        comp = DenseOperator(A) @ DenseOperator(B)
        np.testing.assert_allclose(to_dense(comp), A @ B, atol=1e-13)

    def test_add_and_scale(self):
        rng = np.random.default_rng(3)
        A, B = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        op = 2.0 * DenseOperator(A) + DenseOperator(B)
        np.testing.assert_allclose(to_dense(op), 2 * A + B, atol=1e-13)

    def test_transpose_equals_dense_transpose(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((3, 5))
        np.testing.assert_allclose(to_dense(DenseOperator(A).T), A.T, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_adjoint_consistency(self, seed):
        # <A u, w> == <u, A^T w> on random probes for every implementation.
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((4, 3))
        W = oracles.random_spd(rng, 2, 5.0)
        ops = [
            DenseOperator(A),
            IdentityOperator(4),
            ScalingOperator(3, -1.7),
            KroneckerOperator(DenseOperator(rng.standard_normal((2, 3))),
                              DenseOperator(rng.standard_normal((2, 2)))),
            SymmetricKroneckerOperator(W),
            DenseOperator(rng.standard_normal((3, 3)))
            @ DenseOperator(rng.standard_normal((3, 4))),
        ]
        for op in ops:
            for _ in range(20):
                u = rng.standard_normal(op.shape[1])
                w = rng.standard_normal(op.shape[0])
                lhs = float(np.dot(op.apply(u), w))
                rhs = float(np.dot(u, op.adjoint_apply(w)))
                assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


class TestKronecker:
    def test_identity_kron_identity(self):
        op = KroneckerOperator(IdentityOperator(2), IdentityOperator(3))
        v = np.arange(6.0)
        assert np.array_equal(op.apply(v), v)

    def test_matches_dense_kron(self):
        rng = np.random.default_rng(5)
        L, R = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        op = KroneckerOperator(DenseOperator(L), DenseOperator(R))
        dense = np.kron(L, R)
        for _ in range(5):
            v = rng.standard_normal(4)
            assert np.max(np.abs(op.apply(v) - dense @ v)) <= 1e-13

    def test_diag_scaled_columns(self):
        L = np.diag([1.0, 2.0])
        op = KroneckerOperator(DenseOperator(L), IdentityOperator(2))
        X = np.eye(2)
        expected = np.kron(L, np.eye(2)) @ _vec(X)
        np.testing.assert_allclose(op.apply(_vec(X)), expected, atol=1e-13)

    def test_rectangular_shapes(self):
        rng = np.random.default_rng(6)
        L, R = rng.standard_normal((2, 3)), rng.standard_normal((4, 5))
        op = KroneckerOperator(DenseOperator(L), DenseOperator(R))
        assert op.shape == (8, 15)
        dense = np.kron(L, R)
        v = rng.standard_normal(15)
        np.testing.assert_allclose(op.apply(v), dense @ v, atol=1e-12)

    def test_agrees_with_dense_on_small_instances(self):
        # pq * rs <= 1e4, 1e-12 tolerance.
        rng = np.random.default_rng(7)
        for _ in range(5):
            p, q, r, s = rng.integers(1, 7, size=4)
            L, R = rng.standard_normal((p, q)), rng.standard_normal((r, s))
            op = KroneckerOperator(DenseOperator(L), DenseOperator(R))
            dense = np.kron(L, R)
            v = rng.standard_normal(q * s)
            scale = max(np.max(np.abs(dense @ v)), 1.0)
            assert np.max(np.abs(op.apply(v) - dense @ v)) <= 1e-12 * scale

    def test_mixed_product_property(self):
        # (L (x) R)(L' (x) R') == (L L') (x) (R R') applied to random vecs.
        rng = np.random.default_rng(8)
        L, Lp = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        R, Rp = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        left = KroneckerOperator(DenseOperator(L), DenseOperator(R)) @ KroneckerOperator(
            DenseOperator(Lp), DenseOperator(Rp)
        )
        right = KroneckerOperator(DenseOperator(L @ Lp), DenseOperator(R @ Rp))
        for _ in range(5):
            v = rng.standard_normal(6)
            assert np.max(np.abs(left.apply(v) - right.apply(v))) <= 1e-11 * max(
                1.0, np.max(np.abs(right.apply(v)))
            )


class TestSymmetricKronecker:
    def test_dense_form(self):
        rng = np.random.default_rng(9)
        W = oracles.random_spd(rng, 3, 4.0)
        op = SymmetricKroneckerOperator(W)
        P = oracles.commutation_matrix(3)
        dense = 0.5 * (np.kron(W, W) + np.kron(W, W) @ P)
        np.testing.assert_allclose(to_dense(op), dense, atol=1e-12)

    def test_sandwich_on_symmetric_input(self):
        rng = np.random.default_rng(10)
        W = oracles.random_spd(rng, 3, 4.0)
        X = oracles.random_spd(rng, 3, 2.0)
        out = SymmetricKroneckerOperator(W).apply(_vec(X))
        np.testing.assert_allclose(out, _vec(W @ X @ W), atol=1e-12)

    def test_requires_symmetric_factor(self):
        with pytest.raises(ValueError):
            SymmetricKroneckerOperator(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestToDense:
    def test_identity(self):
        np.testing.assert_array_equal(to_dense(IdentityOperator(3)), np.eye(3))

    def test_cap(self):
        op = IdentityOperator(2000)
        with pytest.raises(ResourceLimitError):
            to_dense(op)
        # Configurable cap.
        assert to_dense(IdentityOperator(10), max_entries=100).shape == (10, 10)

    def test_reproduces_apply(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((5, 4))
        op = DenseOperator(A)
        dense = to_dense(op)
        for _ in range(5):
            v = rng.standard_normal(4)
            assert np.max(np.abs(dense @ v - op.apply(v))) <= 1e-12 * max(
                1.0, np.max(np.abs(op.apply(v)))
            )


class TestAslinop:
    def test_wraps_ndarray(self):
        op = aslinop(np.eye(2))
        assert isinstance(op, DenseOperator)
        assert op.symmetric

    def test_passthrough(self):
        op = IdentityOperator(2)
        assert aslinop(op) is op

    def test_detects_symmetry_flag(self):
        rng = np.random.default_rng(12)
        S = oracles.random_spd(rng, 3, 2.0)
        assert aslinop(S).symmetric
        assert not aslinop(rng.standard_normal((3, 3))).symmetric
