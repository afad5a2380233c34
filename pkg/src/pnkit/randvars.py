"""Gaussian random variables: the common currency of every solver in this package.

A :class:`GaussianBelief` is an immutable multivariate normal distribution with
an exact affine-transformation calculus, sampling, marginalization, and linear
Gaussian conditioning. Covariance factorizations are cached lazily and use a
jittered Cholesky so that degenerate (rank-deficient) covariances remain legal;
solvers legitimately produce zero-variance directions.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError

__all__ = [
    "GaussianBelief",
    "MatrixGaussianBelief",
    "affine_transform",
    "condition_on_linear_observation",
    "marginal",
    "sample",
    "to_json",
    "from_json",
]

# Construction tolerances: symmetry, eigenvalue floor, Cholesky jitter ladder.
_SYM_RTOL = 1e-12
_EIG_FLOOR_REL = 1e-10
_JITTERS = (0.0, 1e-12, 1e-8)


def _as_vector(x, name: str = "vector") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a (possibly degenerate) PSD matrix.

    Tries a plain Cholesky first, then retries with jitter 1e-12 and 1e-8
    relative to the largest diagonal entry. A matrix with zero diagonal is
    treated as the zero matrix.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    max_diag = float(np.max(np.diagonal(cov), initial=0.0))
    if max_diag <= 0.0:
        return np.zeros_like(cov)
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(cov + (jitter * max_diag) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "covariance factorization failed even after jitter escalation "
        f"(max diagonal {max_diag:.3e})"
    )


class GaussianBelief:
    """Multivariate normal N(mean, cov) with a lazily cached Cholesky factor.

    Instances are immutable after construction and safe to share across
    threads. Random streams are always explicit parameters of the operations
    that need them.

    Args:
        mean: Mean vector of length n.
        cov: Symmetric positive-semidefinite n-by-n covariance. Symmetrized as
            (C + C^T)/2 on construction; inputs asymmetric beyond 1e-12
            relative tolerance are rejected.
        cov_factor: Optional lower-triangular L with L @ L.T == cov. When
            given, the eigenvalue validation is skipped (the product is PSD by
            construction).
    """

    __slots__ = ("_mean", "_cov", "_cov_factor")

    def __init__(self, mean, cov, *, cov_factor: np.ndarray | None = None):
        mean = _as_vector(mean, "mean")
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"cov must be square, got shape {cov.shape}")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(
                f"mean has length {mean.shape[0]} but cov has shape {cov.shape}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mean and cov must be finite")

        scale = float(np.max(np.abs(cov), initial=0.0))
        asym = float(np.max(np.abs(cov - cov.T), initial=0.0))
        if asym > _SYM_RTOL * max(scale, 1e-300) and asym > 1e-300:
            raise ValueError(
                f"cov is asymmetric beyond tolerance (max |C - C^T| = {asym:.3e}, "
                f"scale {scale:.3e})"
            )
        cov = 0.5 * (cov + cov.T)

        if cov_factor is None and cov.shape[0] > 0:
            max_diag = float(np.max(np.diagonal(cov), initial=0.0))
            min_eig = float(np.min(np.linalg.eigvalsh(cov)))
            if min_eig < -_EIG_FLOOR_REL * max(max_diag, 1e-300):
                raise ValueError(
                    f"cov has eigenvalue {min_eig:.3e} below the PSD floor "
                    f"(-1e-10 * max diagonal = {-_EIG_FLOOR_REL * max_diag:.3e})"
                )

        self._mean = mean.copy()
        self._cov = cov
        self._mean.flags.writeable = False
        self._cov.flags.writeable = False
        if cov_factor is not None:
            cov_factor = np.ascontiguousarray(cov_factor, dtype=float)
            cov_factor.flags.writeable = False
        self._cov_factor = cov_factor

    @classmethod
    def from_factor(cls, mean, cov_factor) -> "GaussianBelief":
        """Build a belief from mean and lower-triangular covariance factor."""
        cov_factor = np.asarray(cov_factor, dtype=float)
        cov = cov_factor @ cov_factor.T
        return cls(mean, cov, cov_factor=cov_factor)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        return self._cov

    @property
    def dim(self) -> int:
        return self._mean.shape[0]

    @property
    def cov_factor(self) -> np.ndarray:
        """Lower-triangular L with L @ L.T == cov, computed on demand and cached."""
        if self._cov_factor is None:
            factor = cholesky_with_jitter(self._cov)
            factor.flags.writeable = False
            self._cov_factor = factor
        return self._cov_factor

    @property
    def std(self) -> np.ndarray:
        """Elementwise marginal standard deviations."""
        return np.sqrt(np.maximum(np.diagonal(self._cov), 0.0))

    def __repr__(self) -> str:
        return f"GaussianBelief(dim={self.dim})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianBelief):
            return NotImplemented
        return np.array_equal(self._mean, other._mean) and np.array_equal(
            self._cov, other._cov
        )

    def __hash__(self):
        return hash((self._mean.tobytes(), self._cov.tobytes()))


class MatrixGaussianBelief:
    """Gaussian belief over a symmetric n-by-n matrix.

    The covariance over the n^2 entries is the symmetric Kronecker product
    W (x)_s W of a symmetric positive-definite factor ``cov_factor_matrix``
    (see :mod:`pnkit.linops` for the operator realization).

    Args:
        mean: n-by-n matrix mean.
        cov_factor_matrix: Symmetric positive-definite Kronecker factor W.
        symmetric: Whether the modeled matrix is declared symmetric; if so the
            mean must be symmetric.
    """

    __slots__ = ("_mean", "_W", "_symmetric")

    def __init__(self, mean, cov_factor_matrix, *, symmetric: bool = True):
        mean = np.asarray(mean, dtype=float)
        W = np.asarray(cov_factor_matrix, dtype=float)
        if mean.ndim != 2 or mean.shape[0] != mean.shape[1]:
            raise ValueError(f"mean must be square, got shape {mean.shape}")
        if W.shape != mean.shape:
            raise ValueError(
                f"Kronecker factor shape {W.shape} does not match mean {mean.shape}"
            )
        scale = float(np.max(np.abs(mean), initial=0.0))
        if symmetric and np.max(np.abs(mean - mean.T), initial=0.0) > 1e-10 * max(
            scale, 1e-300
        ):
            raise ValueError("mean must be symmetric for a symmetric matrix model")
        wasym = np.max(np.abs(W - W.T), initial=0.0)
        if wasym > 1e-10 * max(float(np.max(np.abs(W), initial=0.0)), 1e-300):
            raise ValueError("Kronecker factor W must be symmetric")
        W = 0.5 * (W + W.T)
        if np.max(np.abs(W)) > 0:
            try:
                np.linalg.cholesky(W + 1e-14 * np.max(np.diagonal(W)) * np.eye(W.shape[0]))
            except np.linalg.LinAlgError as exc:
                raise ValueError("Kronecker factor W must be positive definite") from exc
        self._mean = 0.5 * (mean + mean.T) if symmetric else mean.copy()
        self._W = W
        self._symmetric = symmetric
        self._mean.flags.writeable = False
        self._W.flags.writeable = False

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cov_factor_matrix(self) -> np.ndarray:
        return self._W

    @property
    def symmetric(self) -> bool:
        return self._symmetric

    @property
    def cov(self):
        """Covariance over the n^2 entries as a symmetric Kronecker operator."""
        from .linops import SymmetricKroneckerOperator

        return SymmetricKroneckerOperator(self._W)

    def __repr__(self) -> str:
        return f"MatrixGaussianBelief(shape={self._mean.shape})"


def _apply_matrix(A, x: np.ndarray) -> np.ndarray:
    # Works for ndarrays and for linops operators (both support @).
    return A @ x


def affine_transform(rv: GaussianBelief, A, b=None) -> GaussianBelief:
    """Push a Gaussian through the affine map x -> A x + b.

    Args:
        rv: Input belief of dimension n.
        A: m-by-n matrix or linear operator.
        b: Optional offset of length m (default zero).

    Returns:
        GaussianBelief with mean A @ mean + b and covariance A @ cov @ A.T.
    """
    rows, cols = A.shape
    if cols != rv.dim:
        raise ValueError(f"operator has {cols} columns but rv has dimension {rv.dim}")
    mean = _apply_matrix(A, rv.mean)
    if b is not None:
        b = _as_vector(b, "b")
        if b.shape[0] != rows:
            raise ValueError(f"offset has length {b.shape[0]}, expected {rows}")
        mean = mean + b
    # A cov A^T via two applications; fine for dense and matrix-free A alike.
    ac = _apply_matrix(A, rv.cov)
    cov = _apply_matrix(A, np.asarray(ac).T)
    return GaussianBelief(mean, np.asarray(cov).T)


def sample(rv: GaussianBelief, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` joint samples, one per row.

    Draws are mean + L z with z standard normal, so identical seeds give
    bit-identical outputs.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((count, rv.dim))
    return rv.mean + z @ rv.cov_factor.T


def condition_on_linear_observation(
    rv: GaussianBelief, H, R, y
) -> GaussianBelief:
    """Exact Gaussian posterior given the observation y = H x + noise, noise ~ N(0, R).

    Uses a factor-based solve of the innovation covariance (never an explicit
    inverse) and the Joseph-form covariance update, which keeps the posterior
    PSD even for exact (R = 0) observations.

    Raises:
        ValueError: On dimension mismatch.
        NumericalError: If the innovation covariance is numerically singular.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = _as_vector(y, "y")
    m, n = H.shape
    if n != rv.dim:
        raise ValueError(f"H has {n} columns but rv has dimension {rv.dim}")
    if R.shape != (m, m):
        raise ValueError(f"R must have shape {(m, m)}, got {R.shape}")
    if y.shape[0] != m:
        raise ValueError(f"y has length {y.shape[0]}, expected {m}")

    cov_ht = rv.cov @ H.T
    S = H @ cov_ht + R
    S = 0.5 * (S + S.T)
    eigs = np.linalg.eigvalsh(S)
    trace = float(np.trace(S))
    if eigs[0] <= 1e-14 * max(trace, 1e-300):
        raise NumericalError(
            f"singular innovation covariance: min eigenvalue {eigs[0]:.3e} "
            f"vs trace {trace:.3e}"
        )
    factor = cho_factor(S, lower=True)
    gain = cho_solve(factor, cov_ht.T).T
    mean = rv.mean + gain @ (y - H @ rv.mean)
    # Joseph form: (I - K H) cov (I - K H)^T + K R K^T.
    closure = np.eye(n) - gain @ H
    cov = closure @ rv.cov @ closure.T + gain @ R @ gain.T
    cov = 0.5 * (cov + cov.T)
    # A near-degenerate posterior can carry rounding negatives on the scale of
    # the prior; the exact posterior is PSD, so clip those (and only those).
    prior_scale = float(np.max(np.diagonal(rv.cov), initial=0.0))
    max_diag = float(np.max(np.diagonal(cov), initial=0.0))
    eigs = np.linalg.eigvalsh(cov)
    if eigs[0] < -_EIG_FLOOR_REL * max(max_diag, 1e-300):
        if eigs[0] < -1e-10 * max(prior_scale, 1e-300):
            raise NumericalError(
                f"conditioning produced an indefinite covariance "
                f"(min eigenvalue {eigs[0]:.3e} vs prior scale {prior_scale:.3e})"
            )
        vals, vecs = np.linalg.eigh(cov)
        cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean, cov)


def marginal(rv: GaussianBelief, indices) -> GaussianBelief:
    """Marginal distribution over the given (distinct, in-range) coordinates."""
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1:
        raise ValueError("indices must be one-dimensional")
    if idx.size != np.unique(idx).size:
        raise ValueError("indices must be distinct")
    if idx.size and (idx.min() < 0 or idx.max() >= rv.dim):
        raise ValueError(f"index out of range for dimension {rv.dim}")
    return GaussianBelief(rv.mean[idx], rv.cov[np.ix_(idx, idx)])


def to_json(rv: GaussianBelief) -> str:
    """Serialize to JSON with fields "mean" and row-major nested "cov".

    Python's float repr is the shortest decimal string that round-trips, so
    the serialization is lossless at full binary precision.
    """
    return json.dumps({"mean": rv.mean.tolist(), "cov": rv.cov.tolist()})


def from_json(text: str) -> GaussianBelief:
    """Inverse of :func:`to_json`."""
    payload = json.loads(text)
    return GaussianBelief(payload["mean"], payload["cov"])
