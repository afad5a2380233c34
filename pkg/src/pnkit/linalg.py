"""Probabilistic linear solvers for symmetric positive-definite systems.

Two inference views are implemented and assembled from swappable components
(policy, information operator, belief update, stopping rules):

* solution-space inference, whose posterior mean under the default
  implicit-inverse prior covariance reproduces conjugate-gradient iterates;
* matrix-based inference over the inverse of the system matrix with a
  symmetric-Kronecker covariance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg import qr as scipy_qr

from . import randvars
from .errors import NumericalError, ResourceLimitError
from .linops import LinearOperator, aslinop, to_dense
from .randvars import GaussianBelief, MatrixGaussianBelief

__all__ = [
    "LinearSystem",
    "SolutionBelief",
    "SolverComponents",
    "SolverConfig",
    "StoppingReason",
    "problinsolve",
    "solution_belief_update",
    "matrix_based_update",
    "policy_conjugate",
    "stopping_check",
]

_HUTCHINSON_SEED = 20201
_HUTCHINSON_PROBES = 10


class StoppingReason(str, enum.Enum):
    RESIDUAL_TOL = "residual_tol"
    POSTERIOR_TRACE_TOL = "posterior_trace_tol"
    MAXITER = "maxiter"


@dataclass(frozen=True)
class LinearSystem:
    """A x = b with A symmetric positive definite."""

    A: LinearOperator
    b: np.ndarray

    def __post_init__(self):
        A = aslinop(self.A)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
        if not np.all(np.isfinite(b)):
            raise ValueError("b must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def _probe_symmetry(A: LinearOperator, rng: np.random.Generator, n_probes: int = 3):
    """<A u, v> == <u, A v> on random probes; raises on asymmetry."""
    n = A.shape[1]
    for _ in range(n_probes):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        lhs = float(np.dot(A @ u, v))
        rhs = float(np.dot(u, A @ v))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        if abs(lhs - rhs) > 1e-10 * scale:
            raise ValueError(
                f"matrix fails the symmetry probe: |<Au,v> - <u,Av>| = {abs(lhs - rhs):.3e}"
            )


def _norm_estimate(A: LinearOperator, rng: np.random.Generator, iters: int = 8) -> float:
    """Crude largest-eigenvalue estimate by power iteration."""
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 1.0
    for _ in range(iters):
        w = np.asarray(A @ v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def _hutchinson_trace(A: LinearOperator, n_probes: int = _HUTCHINSON_PROBES) -> float:
    rng = np.random.default_rng(_HUTCHINSON_SEED)
    n = A.shape[0]
    total = 0.0
    for _ in range(n_probes):
        z = rng.integers(0, 2, size=n) * 2.0 - 1.0
        total += float(z @ (A @ z))
    return total / n_probes


@dataclass(frozen=True)
class SolverConfig:
    """Stopping configuration for the iterative solvers."""

    atol: float = 1e-10
    rtol: float = 1e-8
    trace_tol: float | None = None
    maxiter: int | None = None

    def resolved_maxiter(self, n: int) -> int:
        return 10 * n if self.maxiter is None else self.maxiter


@dataclass
class _SolveState:
    """Internal per-solve record shared between the components."""

    system: LinearSystem
    mean: np.ndarray
    directions: list = field(default_factory=list)  # s_i
    observations: list = field(default_factory=list)  # y_i = A s_i
    step_energies: list = field(default_factory=list)  # s_i^T A s_i
    downdate_vecs: list = field(default_factory=list)  # v_i = Sigma_{i-1} y_i
    downdate_scales: list = field(default_factory=list)  # y_i^T v_i
    residual_norms: list = field(default_factory=list)
    trace_deltas: list = field(default_factory=list)
    norm_estimate: float = 0.0
    last_residual_sq: float | None = None
    recurrence_residual: np.ndarray | None = None

    @property
    def residual(self) -> np.ndarray:
        return self.system.b - np.asarray(self.system.A @ self.mean)

    @property
    def policy_residual(self) -> np.ndarray:
        """Recurrence-propagated residual (equals b - A mean in exact arithmetic)."""
        if self.recurrence_residual is None:
            self.recurrence_residual = self.residual
        return self.recurrence_residual

    @property
    def iterations(self) -> int:
        return len(self.directions)


def policy_conjugate(state: _SolveState) -> np.ndarray | None:
    """Current residual A-conjugated against the previous directions.

    Realized through the conjugate-gradient two-term recurrence
    s = r + (r^T r / r_prev^T r_prev) s_prev, which A-conjugates the residual
    against all earlier directions in exact arithmetic; this is the direction
    rule that makes the default solver reproduce conjugate gradients. Returns
    None on a zero residual, which signals convergence rather than an error.
    """
    r = state.policy_residual
    rho = float(r @ r)
    if rho == 0.0:
        return None
    if state.directions:
        s = r + (rho / state.last_residual_sq) * state.directions[-1]
    else:
        s = r.copy()
    state.last_residual_sq = rho
    return s


def information_matvec(system: LinearSystem, s: np.ndarray) -> np.ndarray:
    """Noise-free matrix-vector observation y = A s (the default information operator)."""
    return np.asarray(system.A @ s)


def _implicit_inverse_update(state: _SolveState, s: np.ndarray, y: np.ndarray) -> None:
    """Belief update under the implicit-inverse prior covariance.

    The prior covariance is the inverse of the system matrix, realized through
    the identity cov @ (A s) = s so the inverse is never formed. Conditioning
    on the projected equation s^T A x = s^T b moves the mean by
    (s^T r / s^T A s) s, which is exactly the conjugate-gradient step when the
    policy outputs A-conjugate directions.
    """
    energy = float(s @ y)
    scale = float(s @ s) * max(state.norm_estimate, 1e-300)
    if energy <= 1e-14 * scale:
        raise NumericalError(
            f"search-direction breakdown at iteration {state.iterations}: "
            f"s^T A s = {energy:.3e}"
        )
    # v = Sigma_k y under the implicit-inverse prior: v = s - sum_j v_j (v_j^T y)/d_j
    v = s.copy()
    for v_j, d_j in zip(state.downdate_vecs, state.downdate_scales):
        v -= (v_j @ y) / d_j * v_j
    innov_var = float(y @ v)
    # Projection coefficient s^T r; under the conjugate policy s^T r = r^T r
    # exactly, and the latter float path is what reproduces CG bit-for-bit.
    r = state.policy_residual
    rho = float(r @ r)
    r_proj = rho if state.last_residual_sq == rho else float(s @ r)
    alpha = r_proj / energy
    state.mean = state.mean + alpha * s
    state.recurrence_residual = r - alpha * y
    state.directions.append(s)
    state.observations.append(y)
    state.step_energies.append(energy)
    if innov_var > 1e-14 * scale:
        state.downdate_vecs.append(v)
        state.downdate_scales.append(innov_var)
        state.trace_deltas.append(float(v @ v) / innov_var)
    else:
        # The posterior covariance is numerically exhausted along this
        # direction (it happens once n independent directions have been
        # observed); the projected-equation mean correction still applies,
        # but there is nothing left to downdate.
        state.trace_deltas.append(0.0)


def stopping_check(
    state: _SolveState, config: SolverConfig, cov_trace: float | None = None
) -> StoppingReason | None:
    """First matching criterion or None.

    residual_tol fires when ||b - A mean|| <= atol + rtol ||b||;
    posterior_trace_tol when the solution-covariance trace drops below
    trace_tol (off by default); maxiter at the configured iteration cap.
    """
    res_norm = float(np.linalg.norm(state.residual))
    if res_norm <= config.atol + config.rtol * float(np.linalg.norm(state.system.b)):
        return StoppingReason.RESIDUAL_TOL
    if config.trace_tol is not None and cov_trace is not None:
        if cov_trace <= config.trace_tol:
            return StoppingReason.POSTERIOR_TRACE_TOL
    if state.iterations >= config.resolved_maxiter(state.system.dim):
        return StoppingReason.MAXITER
    return None


@dataclass
class SolverComponents:
    """Pluggable pieces of a probabilistic linear solver.

    Args:
        policy: Search-direction rule, state -> direction (None = converged).
        information_op: Observation rule, (system, s) -> y. The default is the
            noise-free matrix-vector product; the slot exists for future noisy
            models.
        belief_update: Conditioning rule, (state, s, y) -> None.
        stopping: Criterion, (state, config, cov_trace) -> reason or None.
    """

    policy: callable = policy_conjugate
    information_op: callable = information_matvec
    belief_update: callable = _implicit_inverse_update
    stopping: callable = stopping_check


@dataclass(frozen=True)
class SolutionBelief:
    """Output of :func:`problinsolve`."""

    x: GaussianBelief
    Ainv: MatrixGaussianBelief | None
    iterations: int
    residual_norms: tuple[float, ...]
    stopping_reason: StoppingReason
    mean_iterates: tuple[np.ndarray, ...]
    cov_traces: tuple[float, ...]


def solution_belief_update(
    belief: GaussianBelief, s: np.ndarray, y: np.ndarray, b_proj: float
) -> GaussianBelief:
    """Condition an explicit solution belief on the projected equation.

    Observes the noise-free linear functional l^T x = s^T b with l = A s seen
    through the information operator; the posterior mean satisfies
    s^T (A mean - b) = 0.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.any(s):
        raise ValueError("direction s must be nonzero")
    innov_var = float(y @ (belief.cov @ y))
    scale = float(np.max(np.diagonal(belief.cov), initial=0.0)) * float(y @ y)
    if innov_var <= 1e-14 * max(scale, 1e-300):
        raise NumericalError(
            "zero innovation variance: direction already explored (policy breakdown)"
        )
    return randvars.condition_on_linear_observation(
        belief, y[None, :], np.zeros((1, 1)), np.array([b_proj])
    )


def matrix_based_update(
    belief: MatrixGaussianBelief, S: np.ndarray, Y: np.ndarray
) -> MatrixGaussianBelief:
    """Condition a symmetric matrix-variate belief over the inverse on H Y = S.

    Given the prior N(H0, W (x)_s W) and noise-free observations that the
    modeled matrix maps each y_i to s_i, returns the exact Gaussian posterior.
    The posterior mean interpolates all observed pairs and the Kronecker
    factor receives the corresponding rank-k downdate, remaining PSD.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if S.ndim != 2 or Y.shape != S.shape:
        raise ValueError(f"direction/observation shapes differ: {S.shape} vs {Y.shape}")
    n, k = S.shape
    if n != belief.mean.shape[0]:
        raise ValueError(
            f"observations of dimension {n} for a belief of shape {belief.mean.shape}"
        )
    W = belief.cov_factor_matrix
    H0 = belief.mean
    WY = W @ Y
    M = Y.T @ WY
    M = 0.5 * (M + M.T)
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 1e-12 * max(float(eigs[-1]), 1e-300):
        raise NumericalError(
            "rank-deficient observation Gram matrix Y^T W Y; directions are "
            "linearly dependent under the prior"
        )
    factor = cho_factor(M, lower=True)
    U = cho_solve(factor, WY.T).T  # W Y M^{-1}
    D = S - H0 @ Y
    mean = H0 + U @ D.T + D @ U.T - U @ (Y.T @ D) @ U.T
    W_post = W - U @ WY.T
    W_post = 0.5 * (W_post + W_post.T)
    # Clip round-off negatives: the exact downdate is a Schur complement, PSD.
    # Round-off is relative to the prior scale (the posterior may be ~zero).
    eigvals, eigvecs = np.linalg.eigh(W_post)
    prior_scale = float(np.max(np.diagonal(W), initial=0.0))
    if float(eigvals[0]) < -1e-8 * max(prior_scale, 1e-300):
        raise NumericalError("posterior Kronecker factor lost positive semidefiniteness")
    eigvals = np.clip(eigvals, 0.0, None)
    W_post = (eigvecs * eigvals) @ eigvecs.T
    return MatrixGaussianBelief(
        0.5 * (mean + mean.T), 0.5 * (W_post + W_post.T), symmetric=belief.symmetric
    )


def _psd_clip(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clip tiny negative eigenvalues left by round-off."""
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * eigvals) @ eigvecs.T


def _dense_inverse(A: LinearOperator, n: int) -> np.ndarray:
    if n * n > 1_000_000:
        raise ResourceLimitError(
            "reporting a dense solution covariance is capped at 1e6 entries; "
            f"system dimension {n} exceeds it"
        )
    dense = to_dense(A)
    factor = cho_factor(0.5 * (dense + dense.T), lower=True)
    return cho_solve(factor, np.eye(n))


def problinsolve(
    A,
    b=None,
    prior: GaussianBelief | None = None,
    components: SolverComponents | None = None,
    config: SolverConfig | None = None,
    *,
    compute_matrix_belief: bool = True,
) -> SolutionBelief:
    """Solve A x = b by probabilistic inference; returns a belief over x.

    With the default components (conjugate policy, implicit-inverse prior
    covariance, noise-free matrix-vector information) the posterior mean after
    k iterations equals the k-th conjugate-gradient iterate.

    Args:
        A: Symmetric positive-definite matrix or linear operator.
        b: Right-hand side.
        prior: Optional explicit Gaussian prior over the solution. When given,
            belief updates run through the explicit-covariance path instead of
            the implicit-inverse default.
        components: Swappable solver components.
        config: Stopping configuration (atol, rtol, trace_tol, maxiter).
        compute_matrix_belief: Also infer a matrix-variate belief over the
            inverse from the collected observations.

    Returns:
        SolutionBelief with the posterior over x, per-iteration diagnostics,
        and optionally a belief over the matrix inverse.
    """
    if isinstance(A, LinearSystem):
        system = A
        if b is not None and not np.array_equal(
            np.asarray(b, dtype=float).reshape(-1), system.b
        ):
            raise ValueError("b conflicts with the right-hand side of the given system")
    else:
        if b is None:
            raise ValueError("b is required when A is not a LinearSystem")
        system = LinearSystem(aslinop(A), b)
    n = system.dim
    rng = np.random.default_rng(_HUTCHINSON_SEED + 1)
    _probe_symmetry(system.A, rng)
    config = config or SolverConfig()
    components = components or SolverComponents()

    explicit_prior = prior is not None
    if explicit_prior:
        if prior.dim != n:
            raise ValueError(f"prior has dimension {prior.dim}, system has {n}")
        belief = prior
        state = _SolveState(system=system, mean=prior.mean.copy())
    else:
        state = _SolveState(system=system, mean=np.zeros(n))
        belief = None
    state.norm_estimate = _norm_estimate(system.A, rng)

    mean_iterates = [state.mean.copy()]
    state.residual_norms.append(float(np.linalg.norm(state.residual)))
    trace_seq: list[float] = []
    if explicit_prior:
        trace_seq.append(float(np.trace(prior.cov)))
    elif config.trace_tol is not None:
        # The implicit-inverse trace recursion needs its base point.
        trace_seq.append(float(np.trace(_dense_inverse(system.A, n))))

    reason = None
    while True:
        cov_trace = trace_seq[-1] if trace_seq else None
        reason = components.stopping(state, config, cov_trace)
        if reason is not None:
            break
        s = components.policy(state)
        if s is None:
            reason = StoppingReason.RESIDUAL_TOL
            break
        y = components.information_op(system, s)
        if explicit_prior:
            belief = solution_belief_update(belief, s, y, float(s @ system.b))
            state.mean = belief.mean.copy()
            state.recurrence_residual = None  # recompute from the new mean
            state.directions.append(np.asarray(s, dtype=float))
            state.observations.append(np.asarray(y, dtype=float))
            state.step_energies.append(float(np.dot(s, y)))
            trace_seq.append(float(np.trace(belief.cov)))
        else:
            components.belief_update(state, s, y)
            if config.trace_tol is not None:
                trace_seq.append(trace_seq[-1] - state.trace_deltas[-1])
        mean_iterates.append(state.mean.copy())
        state.residual_norms.append(float(np.linalg.norm(state.residual)))

    if explicit_prior:
        x_belief = belief
        cov_traces = tuple(trace_seq)
    else:
        inv_dense = _dense_inverse(system.A, n)
        cov = inv_dense.copy()
        for v, d in zip(state.downdate_vecs, state.downdate_scales):
            cov -= np.outer(v, v) / d
        x_belief = GaussianBelief(state.mean, _psd_clip(cov))
        base_trace = float(np.trace(inv_dense))
        cov_traces = [base_trace]
        for delta in state.trace_deltas:
            cov_traces.append(cov_traces[-1] - delta)
        cov_traces = tuple(cov_traces)

    matrix_belief = None
    if compute_matrix_belief and state.iterations > 0:
        trace_est = _hutchinson_trace(system.A)
        scale = n / trace_est if trace_est > 0 else 1.0
        prior_matrix = MatrixGaussianBelief(scale * np.eye(n), scale * np.eye(n))
        S = np.column_stack(state.directions)
        Y = np.column_stack(state.observations)
        if S.shape[1] > 1:
            # Redundant noise-free observations carry no information; keep a
            # numerically independent subset (exact in exact arithmetic).
            _, r_fact, pivots = scipy_qr(Y, mode="economic", pivoting=True)
            diag = np.abs(np.diagonal(r_fact))
            mask = diag > 1e-5 * max(float(diag[0]), 1e-300)
            keep = np.sort(pivots[: diag.size][mask])
            S, Y = S[:, keep], Y[:, keep]
        try:
            matrix_belief = matrix_based_update(prior_matrix, S, Y)
        except NumericalError:
            # Ill-conditioned systems can exhaust numerically independent
            # directions; the matrix belief is optional, so omit it.
            matrix_belief = None

    return SolutionBelief(
        x=x_belief,
        Ainv=matrix_belief,
        iterations=state.iterations,
        residual_norms=tuple(state.residual_norms),
        stopping_reason=reason,
        mean_iterates=tuple(np.asarray(m) for m in mean_iterates),
        cov_traces=cov_traces,
    )
