"""Bayesian quadrature under Gaussian and Lebesgue (box) measures.

A Gaussian process with a squared-exponential kernel gives closed-form kernel
embeddings against both measure families, so integral estimates come out as
exact one-dimensional Gaussian beliefs: mean w^T f(X) with w = K^{-1} z and
variance c - z^T K^{-1} z, where z are the kernel means at the nodes and c is
the prior integral variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import pdist
from scipy.special import erf

from .errors import NumericalError
from .randvars import GaussianBelief

__all__ = [
    "GaussianMeasure",
    "LebesgueBoxMeasure",
    "QuadProblem",
    "SquaredExpKernel",
    "BQState",
    "kernel_mean",
    "initial_error",
    "bq_integrate",
    "bayesian_monte_carlo",
    "optimize_lengthscale",
]

_GRAM_JITTERS = (1e-10, 1e-7)


@dataclass(frozen=True)
class GaussianMeasure:
    """N(mean, diag(var)) on R^n."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if mean.shape != var.shape or mean.ndim != 1:
            raise ValueError("mean and var must be vectors of equal length")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((count, self.dim))


@dataclass(frozen=True)
class LebesgueBoxMeasure:
    """Lebesgue measure on the axis-aligned box [a, b].

    With ``normalize`` the measure is the uniform probability measure on the
    box; without it, integrals carry the raw volume semantics of ∫ f dx.
    """

    a: np.ndarray
    b: np.ndarray
    normalize: bool = False

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("bounds must be vectors of equal length")
        if not np.all(a < b):
            raise ValueError("need a < b componentwise")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.b - self.a))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random((count, self.dim))
        return self.a + (self.b - self.a) * u


Measure = GaussianMeasure | LebesgueBoxMeasure


@dataclass(frozen=True)
class QuadProblem:
    """Integral of ``integrand`` against ``measure`` over R^n or a box."""

    integrand: Callable[[np.ndarray], float]
    measure: Measure

    @property
    def dim(self) -> int:
        return self.measure.dim

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([float(self.integrand(x)) for x in X])


@dataclass(frozen=True)
class SquaredExpKernel:
    """k(x, x') = output_scale * exp(-0.5 sum_i (x_i - x'_i)^2 / l_i^2)."""

    lengthscales: np.ndarray
    output_scale: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def gram(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)) / self.lengthscales
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float)) / self.lengthscales
        sq = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
        return self.output_scale * np.exp(-0.5 * sq)


def _check_dims(kernel: SquaredExpKernel, measure: Measure):
    if kernel.dim != measure.dim:
        raise ValueError(
            f"kernel dimension {kernel.dim} != measure dimension {measure.dim}"
        )


def kernel_mean(kernel: SquaredExpKernel, measure: Measure, x) -> float:
    """Closed-form embedding z(x) = ∫ k(x, x') dμ(x')."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(kernel_means(kernel, measure, x[None, :])[0])


def kernel_means(kernel: SquaredExpKernel, measure: Measure, X: np.ndarray) -> np.ndarray:
    """Vectorized kernel means at the rows of X."""
    _check_dims(kernel, measure)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != measure.dim:
        raise ValueError(f"nodes have dimension {X.shape[1]}, expected {measure.dim}")
    ls = kernel.lengthscales
    if isinstance(measure, GaussianMeasure):
        widths = ls**2 + measure.var
        factors = np.sqrt(ls**2 / widths) * np.exp(
            -0.5 * (X - measure.mean) ** 2 / widths
        )
        return kernel.output_scale * np.prod(factors, axis=1)
    if isinstance(measure, LebesgueBoxMeasure):
        root2_ls = np.sqrt(2.0) * ls
        per_axis = (
            ls
            * np.sqrt(np.pi / 2.0)
            * (erf((measure.b - X) / root2_ls) - erf((measure.a - X) / root2_ls))
        )
        out = kernel.output_scale * np.prod(per_axis, axis=1)
        return out / measure.volume if measure.normalize else out
    raise ValueError(f"unsupported measure type {type(measure).__name__}")


def initial_error(kernel: SquaredExpKernel, measure: Measure) -> float:
    """Prior integral variance c = ∬ k(x, x') dμ(x) dμ(x'), in closed form."""
    _check_dims(kernel, measure)
    ls = kernel.lengthscales
    if isinstance(measure, GaussianMeasure):
        return float(
            kernel.output_scale * np.prod(np.sqrt(ls**2 / (ls**2 + 2.0 * measure.var)))
        )
    if isinstance(measure, LebesgueBoxMeasure):
        w = measure.b - measure.a
        per_axis = 2.0 * w * ls * np.sqrt(np.pi / 2.0) * erf(
            w / (np.sqrt(2.0) * ls)
        ) - 2.0 * ls**2 * (1.0 - np.exp(-0.5 * (w / ls) ** 2))
        c = kernel.output_scale * float(np.prod(per_axis))
        return c / measure.volume**2 if measure.normalize else c
    raise ValueError(f"unsupported measure type {type(measure).__name__}")


@dataclass(frozen=True)
class BQState:
    """Fitted quadrature state: nodes, values, Gram factor, embeddings."""

    nodes: np.ndarray
    values: np.ndarray
    gram_factor: tuple
    kernel_means: np.ndarray
    initial_error: float


def _factor_gram(kernel: SquaredExpKernel, X: np.ndarray):
    K = kernel.gram(X)
    n = K.shape[0]
    for jitter in _GRAM_JITTERS:
        try:
            return cho_factor(K + jitter * kernel.output_scale * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "Gram matrix is singular even after jitter escalation; "
        "deduplicate the quadrature nodes"
    )


def build_bq_state(problem: QuadProblem, X: np.ndarray, values: np.ndarray,
                   kernel: SquaredExpKernel) -> BQState:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    values = np.asarray(values, dtype=float).reshape(-1)
    if X.shape[0] != values.shape[0]:
        raise ValueError(f"{X.shape[0]} nodes but {values.shape[0]} values")
    if X.shape[0] < 1:
        raise ValueError("need at least one node")
    if isinstance(problem.measure, LebesgueBoxMeasure):
        inside = np.all((X >= problem.measure.a) & (X <= problem.measure.b), axis=1)
        if not np.all(inside):
            raise ValueError("all nodes must lie inside the integration box")
    return BQState(
        nodes=X,
        values=values,
        gram_factor=_factor_gram(kernel, X),
        kernel_means=kernel_means(kernel, problem.measure, X),
        initial_error=initial_error(kernel, problem.measure),
    )


def bq_integrate(
    problem: QuadProblem, X: np.ndarray, values: np.ndarray, kernel: SquaredExpKernel
) -> GaussianBelief:
    """Gaussian belief over the integral from fixed nodes and values.

    Posterior mean w^T values with weights w = K^{-1} z solved through the
    Gram factor; posterior variance c - z^T K^{-1} z, clipped to [0, c].
    """
    state = build_bq_state(problem, X, values, kernel)
    weights = cho_solve(state.gram_factor, state.kernel_means)
    mean = float(weights @ state.values)
    var = state.initial_error - float(state.kernel_means @ weights)
    var = min(max(var, 0.0), state.initial_error)
    return GaussianBelief(np.array([mean]), np.array([[var]]))


def prior_belief(kernel: SquaredExpKernel, measure: Measure) -> GaussianBelief:
    """Belief over the integral before any evaluations: N(0, c)."""
    return GaussianBelief(np.zeros(1), np.array([[initial_error(kernel, measure)]]))


def bayesian_monte_carlo(
    problem: QuadProblem,
    n_nodes: int,
    kernel: SquaredExpKernel,
    rng: np.random.Generator,
) -> tuple[GaussianBelief, np.ndarray]:
    """Bayesian quadrature at nodes sampled i.i.d. from the (normalized) measure.

    For an unnormalized box the nodes are uniform and the volume semantics
    enter through the kernel-mean formulas. Zero nodes returns the prior
    belief N(0, c).

    Returns:
        (belief, nodes).
    """
    if n_nodes < 0:
        raise ValueError(f"n_nodes must be >= 0, got {n_nodes}")
    if n_nodes == 0:
        return prior_belief(kernel, problem.measure), np.zeros((0, problem.dim))
    X = problem.measure.sample(rng, n_nodes)
    values = problem.evaluate(X)
    return bq_integrate(problem, X, values, kernel), X


def _profile_loglik(unit_kernel: SquaredExpKernel, X, values):
    """Profile log marginal likelihood with the closed-form output scale."""
    n = values.shape[0]
    factor = _factor_gram(unit_kernel, X)
    alpha = cho_solve(factor, values)
    sigma2 = float(values @ alpha) / n
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(factor[0]))))
    if sigma2 <= 0:
        return -np.inf, 0.0
    return -0.5 * (n * np.log(sigma2) + logdet + n), sigma2


def optimize_lengthscale(
    X: np.ndarray,
    values: np.ndarray,
    kernel: SquaredExpKernel,
    n_grid: int = 25,
    span: tuple[float, float] = (1e-2, 1e2),
) -> SquaredExpKernel:
    """Fit the kernel by grid search on the GP log marginal likelihood.

    Scans ``n_grid`` log-uniform isotropic lengthscales spanning
    ``span[0]``..``span[1]`` times the median pairwise node distance; for each
    candidate the output scale is set to its closed-form maximizer. The search
    is deterministic. All-identical values return the smallest grid
    lengthscale with a warning.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    values = np.asarray(values, dtype=float).reshape(-1)
    if X.shape[0] < 2 or np.unique(X, axis=0).shape[0] < 2:
        raise ValueError("need at least two distinct nodes")
    median_dist = float(np.median(pdist(X)))
    if median_dist <= 0:
        median_dist = 1.0
    grid = median_dist * np.logspace(np.log10(span[0]), np.log10(span[1]), n_grid)

    if np.ptp(values) == 0.0:
        warnings.warn(
            "all integrand values are identical; returning the smallest grid "
            "lengthscale",
            RuntimeWarning,
            stacklevel=2,
        )
        ls = float(grid[0])
        unit = SquaredExpKernel(np.full(X.shape[1], ls), 1.0)
        _, sigma2 = _profile_loglik(unit, X, values)
        return SquaredExpKernel(np.full(X.shape[1], ls), max(sigma2, 1e-12))

    best = (-np.inf, float(grid[0]), 1.0)
    for ls in grid:
        unit = SquaredExpKernel(np.full(X.shape[1], float(ls)), 1.0)
        loglik, sigma2 = _profile_loglik(unit, X, values)
        if loglik > best[0]:
            best = (loglik, float(ls), sigma2)
    _, ls, sigma2 = best
    return SquaredExpKernel(np.full(X.shape[1], ls), max(sigma2, 1e-12))
