"""Matrix-free linear operators with apply/adjoint contracts.

Operators are immutable, reentrant, and closed under addition, composition,
scaling, and transposition through lazy combinators. Kronecker and symmetric
Kronecker structure backs the matrix-valued beliefs used by the linear
solvers. The vectorization convention is column-major throughout.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ResourceLimitError

__all__ = [
    "LinearOperator",
    "DenseOperator",
    "IdentityOperator",
    "ScalingOperator",
    "KroneckerOperator",
    "SymmetricKroneckerOperator",
    "aslinop",
    "to_dense",
]

_DENSE_CAP = 1_000_000


class LinearOperator:
    """A linear map defined by its action on vectors.

    Args:
        shape: (rows, cols).
        apply_fn: v -> A @ v for v of length cols.
        adjoint_apply_fn: w -> A.T @ w for w of length rows.
        symmetric: Declares <A u, v> == <u, A v>.
        positive_definite: Declares x^T A x > 0 for x != 0 (implies symmetric).
    """

    def __init__(
        self,
        shape: tuple[int, int],
        apply_fn: Callable[[np.ndarray], np.ndarray],
        adjoint_apply_fn: Callable[[np.ndarray], np.ndarray],
        *,
        symmetric: bool = False,
        positive_definite: bool = False,
    ):
        self.shape = (int(shape[0]), int(shape[1]))
        self._apply = apply_fn
        self._adjoint_apply = adjoint_apply_fn
        self.symmetric = bool(symmetric)
        self.positive_definite = bool(positive_definite)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Return A @ v without materializing A."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.shape[1]:
            raise ValueError(
                f"operator of shape {self.shape} applied to vector of length {v.shape[0]}"
            )
        return self._apply(v)

    def adjoint_apply(self, w: np.ndarray) -> np.ndarray:
        """Return A.T @ w."""
        w = np.asarray(w, dtype=float)
        if w.shape[0] != self.shape[0]:
            raise ValueError(
                f"adjoint of shape {self.shape} applied to vector of length {w.shape[0]}"
            )
        return self._adjoint_apply(w)

    # -- combinators -------------------------------------------------------

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            if self.shape[1] != other.shape[0]:
                raise ValueError(f"cannot compose shapes {self.shape} and {other.shape}")
            return LinearOperator(
                (self.shape[0], other.shape[1]),
                lambda v: self.apply(other.apply(v)),
                lambda w: other.adjoint_apply(self.adjoint_apply(w)),
            )
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 1:
            return self.apply(arr)
        if arr.ndim == 2:
            # Columnwise application.
            return np.column_stack([self.apply(arr[:, j]) for j in range(arr.shape[1])])
        raise ValueError(f"cannot apply operator to array of ndim {arr.ndim}")

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        if not isinstance(other, LinearOperator):
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"cannot add shapes {self.shape} and {other.shape}")
        return LinearOperator(
            self.shape,
            lambda v: self.apply(v) + other.apply(v),
            lambda w: self.adjoint_apply(w) + other.adjoint_apply(w),
            symmetric=self.symmetric and other.symmetric,
        )

    def __mul__(self, scalar: float) -> "LinearOperator":
        alpha = float(scalar)
        return LinearOperator(
            self.shape,
            lambda v: alpha * self.apply(v),
            lambda w: alpha * self.adjoint_apply(w),
            symmetric=self.symmetric,
            positive_definite=self.positive_definite and alpha > 0,
        )

    __rmul__ = __mul__

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(
            (self.shape[1], self.shape[0]),
            self.adjoint_apply,
            self.apply,
            symmetric=self.symmetric,
            positive_definite=self.positive_definite,
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape})"


class DenseOperator(LinearOperator):
    """Wrap an explicit matrix as an operator."""

    def __init__(self, matrix, **flags):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
        self.matrix = matrix
        if "symmetric" not in flags and matrix.shape[0] == matrix.shape[1]:
            scale = float(np.max(np.abs(matrix), initial=0.0))
            flags["symmetric"] = bool(
                np.max(np.abs(matrix - matrix.T), initial=0.0) <= 1e-12 * max(scale, 1e-300)
            )
        super().__init__(
            matrix.shape, lambda v: self.matrix @ v, lambda w: self.matrix.T @ w, **flags
        )


class IdentityOperator(LinearOperator):
    def __init__(self, n: int):
        super().__init__(
            (n, n), lambda v: v.copy(), lambda w: w.copy(),
            symmetric=True, positive_definite=True,
        )


class ScalingOperator(LinearOperator):
    """alpha * I on R^n."""

    def __init__(self, n: int, alpha: float):
        self.alpha = float(alpha)
        super().__init__(
            (n, n),
            lambda v: self.alpha * v,
            lambda w: self.alpha * w,
            symmetric=True,
            positive_definite=self.alpha > 0,
        )


def _vec(X: np.ndarray) -> np.ndarray:
    # Column-major vectorization, fixed project-wide.
    return X.flatten(order="F")


def _unvec(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return x.reshape(shape, order="F")


class KroneckerOperator(LinearOperator):
    """left (x) right acting on column-major vectorized matrices.

    (L (x) R) vec(X) = vec(R X L^T), computed in O(cost(L) + cost(R))
    applications without forming the Kronecker matrix.
    """

    def __init__(self, left: LinearOperator, right: LinearOperator):
        self.left = left if isinstance(left, LinearOperator) else DenseOperator(left)
        self.right = right if isinstance(right, LinearOperator) else DenseOperator(right)
        p, q = self.left.shape
        r, s = self.right.shape
        self._in_shape = (s, q)
        self._out_shape = (r, p)
        super().__init__(
            (p * r, q * s),
            self._kron_apply,
            self._kron_adjoint,
            symmetric=self.left.symmetric and self.right.symmetric and p == q and r == s,
        )

    def _kron_apply(self, vec_x: np.ndarray) -> np.ndarray:
        X = _unvec(vec_x, self._in_shape)
        # R X L^T == ((L (R X)^T)^T, evaluated columnwise through the factors.
        RX = self.right @ X
        return _vec(np.asarray(self.left @ RX.T).T)

    def _kron_adjoint(self, vec_y: np.ndarray) -> np.ndarray:
        Y = _unvec(vec_y, self._out_shape)
        RtY = self.right.T @ Y
        return _vec(np.asarray(self.left.T @ RtY.T).T)


class SymmetricKroneckerOperator(LinearOperator):
    """Symmetric Kronecker product W (x)_s W for a symmetric factor W.

    Acts on column-major vectorized matrices as vec(X) -> vec(W S(X) W) with
    S(X) = (X + X^T)/2; on symmetric inputs this is the W X W sandwich. It is
    the covariance structure of :class:`pnkit.randvars.MatrixGaussianBelief`.
    """

    def __init__(self, factor):
        W = np.asarray(factor, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"factor must be a square matrix, got shape {W.shape}")
        scale = float(np.max(np.abs(W), initial=0.0))
        if np.max(np.abs(W - W.T), initial=0.0) > 1e-10 * max(scale, 1e-300):
            raise ValueError("factor of a symmetric Kronecker product must be symmetric")
        self.factor = 0.5 * (W + W.T)
        n = W.shape[0]
        self._n = n
        super().__init__((n * n, n * n), self._sym_apply, self._sym_apply, symmetric=True)

    def _sym_apply(self, vec_x: np.ndarray) -> np.ndarray:
        X = _unvec(vec_x, (self._n, self._n))
        Xs = 0.5 * (X + X.T)
        return _vec(self.factor @ Xs @ self.factor)


def aslinop(A, **flags) -> LinearOperator:
    """Coerce a matrix or operator to a LinearOperator."""
    if isinstance(A, LinearOperator):
        return A
    return DenseOperator(A, **flags)


def to_dense(op: LinearOperator, max_entries: int = _DENSE_CAP) -> np.ndarray:
    """Materialize an operator column by column.

    Raises:
        ResourceLimitError: If rows * cols exceeds ``max_entries``.
    """
    rows, cols = op.shape
    if rows * cols > max_entries:
        raise ResourceLimitError(
            f"to_dense of shape {op.shape} exceeds the cap of {max_entries} entries"
        )
    out = np.empty((rows, cols))
    basis = np.zeros(cols)
    for j in range(cols):
        basis[j] = 1.0
        out[:, j] = op.apply(basis)
        basis[j] = 0.0
    return out
