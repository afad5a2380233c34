"""Discrete-time Gaussian filtering and smoothing.

Kalman prediction and update, forward filtering with first-class missing
observations, Rauch-Tung-Striebel smoothing, square-root variants that
propagate only triangular covariance factors, and backward joint posterior
sampling. All operations are pure functions of their inputs; trajectories are
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import randvars
from .errors import NumericalError
from .randvars import GaussianBelief, cholesky_with_jitter

__all__ = [
    "GaussianTransition",
    "LinearObservationModel",
    "FilterTrajectory",
    "predict",
    "update",
    "kalman_filter",
    "rts_smooth",
    "sqrt_predict",
    "sqrt_update",
    "sample_posterior",
]


@dataclass(frozen=True)
class GaussianTransition:
    """x' = Phi x + b + w with w ~ N(0, Q)."""

    Phi: np.ndarray
    Q: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if Phi.ndim != 2 or Phi.shape[0] != Phi.shape[1]:
            raise ValueError(f"Phi must be square, got shape {Phi.shape}")
        if Q.shape != Phi.shape:
            raise ValueError(f"Q has shape {Q.shape}, expected {Phi.shape}")
        scale = float(np.max(np.abs(Q), initial=0.0))
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10 * max(scale, 1e-300):
            raise ValueError("Q must be symmetric")
        b = self.b
        if b is not None:
            b = np.asarray(b, dtype=float)
            if b.shape != (Phi.shape[0],):
                raise ValueError(f"drift has shape {b.shape}, expected ({Phi.shape[0]},)")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.Phi.shape[0]

    def drift(self) -> np.ndarray:
        return self.b if self.b is not None else np.zeros(self.dim)

    def noise_factor(self) -> np.ndarray:
        """Lower-triangular factor of Q (jitter policy as in randvars)."""
        return cholesky_with_jitter(self.Q)


@dataclass(frozen=True)
class LinearObservationModel:
    """y = H x + c + noise with noise ~ N(0, R)."""

    H: np.ndarray
    R: np.ndarray
    c: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        m = H.shape[0]
        if R.shape != (m, m):
            raise ValueError(f"R has shape {R.shape}, expected ({m}, {m})")
        scale = float(np.max(np.abs(R), initial=0.0))
        if np.max(np.abs(R - R.T), initial=0.0) > 1e-10 * max(scale, 1e-300):
            raise ValueError("R must be symmetric")
        c = self.c
        if c is not None:
            c = np.asarray(c, dtype=float)
            if c.shape != (m,):
                raise ValueError(f"offset has shape {c.shape}, expected ({m},)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", 0.5 * (R + R.T))
        object.__setattr__(self, "c", c)

    def offset(self) -> np.ndarray:
        return self.c if self.c is not None else np.zeros(self.H.shape[0])


@dataclass(frozen=True)
class FilterTrajectory:
    """Forward-filtering record: per-time filtered and predicted moments.

    ``filtered[k]`` and ``predicted[k]`` are the posterior and prior beliefs at
    ``times[k]``; ``predicted[0] == filtered[0]`` is the initial belief, and
    ``transitions[k]`` maps time k to time k+1.
    """

    times: np.ndarray
    filtered: tuple[GaussianBelief, ...]
    predicted: tuple[GaussianBelief, ...]
    transitions: tuple[GaussianTransition, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if times.size >= 2 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        n = times.size
        if not (len(self.filtered) == len(self.predicted) == n):
            raise ValueError("filtered/predicted lengths must match times")
        if len(self.transitions) != max(n - 1, 0):
            raise ValueError("need exactly one transition per step")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "filtered", tuple(self.filtered))
        object.__setattr__(self, "predicted", tuple(self.predicted))
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def __len__(self) -> int:
        return self.times.size


def predict(state: GaussianBelief, transition: GaussianTransition) -> GaussianBelief:
    """Kalman prediction: mean' = Phi mean + b, cov' = Phi cov Phi^T + Q."""
    if transition.dim != state.dim:
        raise ValueError(
            f"transition dimension {transition.dim} != state dimension {state.dim}"
        )
    Phi = transition.Phi
    mean = Phi @ state.mean + transition.drift()
    cov = Phi @ state.cov @ Phi.T + transition.Q
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def update(
    state: GaussianBelief, model: LinearObservationModel, y
) -> tuple[GaussianBelief, GaussianBelief]:
    """Kalman update against y = H x + c + noise.

    Returns:
        (posterior, innovation) where the innovation belief carries the
        residual z = y - H mean - c as its mean and S = H cov H^T + R as its
        covariance, for calibration consumers.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    z = y - model.H @ state.mean - model.offset()
    S = model.H @ state.cov @ model.H.T + model.R
    posterior = randvars.condition_on_linear_observation(
        state, model.H, model.R, y - model.offset()
    )
    innovation = GaussianBelief(z, 0.5 * (S + S.T))
    return posterior, innovation


def kalman_filter(
    initial: GaussianBelief,
    transitions,
    observations,
    times=None,
) -> FilterTrajectory:
    """Forward Kalman recursion with missing observations as first-class steps.

    Args:
        initial: Belief at the first time point.
        transitions: Sequence of N GaussianTransition, one per step.
        observations: Sequence of N entries, each either None (predict-only
            step) or a tuple (LinearObservationModel, y).
        times: Optional strictly increasing time grid of length N + 1;
            defaults to 0, 1, ..., N.

    Returns:
        FilterTrajectory caching filtered and predicted moments per time.
    """
    transitions = tuple(transitions)
    observations = tuple(observations)
    if len(observations) != len(transitions):
        raise ValueError(
            f"{len(transitions)} transitions but {len(observations)} observation slots"
        )
    n_steps = len(transitions)
    if times is None:
        times = np.arange(n_steps + 1, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.shape != (n_steps + 1,):
        raise ValueError(f"times must have length {n_steps + 1}")

    filtered = [initial]
    predicted = [initial]
    state = initial
    for transition, obs in zip(transitions, observations):
        state = predict(state, transition)
        predicted.append(state)
        if obs is not None:
            model, y = obs
            state, _ = update(state, model, y)
        filtered.append(state)
    return FilterTrajectory(times, tuple(filtered), tuple(predicted), transitions)


def _smoother_gain(
    filtered: GaussianBelief, transition: GaussianTransition, predicted_next: GaussianBelief
) -> np.ndarray:
    """G = cov_f Phi^T cov_pred^{-1} via a factor-based solve with jitter escalation."""
    cross = filtered.cov @ transition.Phi.T
    P = predicted_next.cov
    max_diag = float(np.max(np.diagonal(P), initial=0.0))
    if max_diag <= 0.0:
        # Deterministic chain: the smoother correction vanishes identically.
        return np.zeros_like(cross)
    for jitter in (0.0, 1e-12, 1e-8):
        try:
            factor = cho_factor(P + jitter * max_diag * np.eye(P.shape[0]), lower=True)
            return cho_solve(factor, cross.T).T
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("singular predicted covariance in the smoother gain solve")


def rts_smooth(traj: FilterTrajectory) -> tuple[GaussianBelief, ...]:
    """Rauch-Tung-Striebel backward pass.

    The final smoothed state equals the final filtered state exactly.
    """
    n = len(traj)
    if n == 0:
        return ()
    smoothed = [traj.filtered[-1]]
    for k in range(n - 2, -1, -1):
        f_k = traj.filtered[k]
        p_next = traj.predicted[k + 1]
        s_next = smoothed[0]
        G = _smoother_gain(f_k, traj.transitions[k], p_next)
        mean = f_k.mean + G @ (s_next.mean - p_next.mean)
        cov = f_k.cov + G @ (s_next.cov - p_next.cov) @ G.T
        smoothed.insert(0, GaussianBelief(mean, 0.5 * (cov + cov.T)))
    return tuple(smoothed)


def _triangularize(stacked: np.ndarray) -> np.ndarray:
    """Lower-triangular R^T (nonnegative diagonal) of a QR of the stacked factor."""
    _, r = np.linalg.qr(stacked)
    signs = np.sign(np.diagonal(r))
    signs = np.where(signs == 0, 1.0, signs)
    return (signs[:, None] * r).T


def sqrt_predict(state: GaussianBelief, transition: GaussianTransition) -> GaussianBelief:
    """Prediction on Cholesky factors only; no subtraction of PSD matrices.

    The stacked factor [ (Phi L)^T ; L_Q^T ] is triangularized orthogonally,
    giving the predicted factor directly.
    """
    if transition.dim != state.dim:
        raise ValueError(
            f"transition dimension {transition.dim} != state dimension {state.dim}"
        )
    Phi = transition.Phi
    mean = Phi @ state.mean + transition.drift()
    stacked = np.vstack([(Phi @ state.cov_factor).T, transition.noise_factor().T])
    factor = _triangularize(stacked)
    return GaussianBelief.from_factor(mean, factor)


def sqrt_update(
    state: GaussianBelief, model: LinearObservationModel, y
) -> tuple[GaussianBelief, GaussianBelief]:
    """Square-root Kalman update via one orthogonal triangularization.

    Factors the pre-array [[H L, L_R], [L, 0]]; its triangularization yields
    chol(S), the gain, and the posterior factor without forming covariances.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    H = model.H
    m, n = H.shape
    if n != state.dim:
        raise ValueError(f"H has {n} columns but state has dimension {state.dim}")
    L = state.cov_factor
    LR = cholesky_with_jitter(model.R)
    pre = np.zeros((m + n, n + m))
    pre[:m, :n] = H @ L
    pre[:m, n:] = LR
    pre[m:, :n] = L
    lower = _triangularize(pre.T)
    S_factor = lower[:m, :m]
    cross = lower[m:, :m]
    post_factor = lower[m:, m:]

    z = y - H @ state.mean - model.offset()
    diag = np.abs(np.diagonal(S_factor))
    if m and float(np.min(diag)) <= 1e-14 * max(float(np.max(diag)), 1e-300):
        raise NumericalError("singular innovation covariance in square-root update")
    gain = solve_triangular(S_factor, cross.T, lower=True, trans="T").T
    mean = state.mean + gain @ z
    posterior = GaussianBelief.from_factor(mean, post_factor)
    innovation = GaussianBelief.from_factor(z, S_factor)
    return posterior, innovation


def sample_posterior(
    traj: FilterTrajectory,
    rng: np.random.Generator,
    count: int,
    smoothed: tuple[GaussianBelief, ...] | None = None,
) -> np.ndarray:
    """Joint trajectories from the smoothing posterior by backward sampling.

    Draws the final state from the final smoothed belief, then iterates
    backward sampling x_k | x_{k+1} from the Gaussian conditional implied by
    the filtered moments and the transition.

    Returns:
        Array of shape (count, len(traj), dim).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n = len(traj)
    if smoothed is None:
        smoothed = rts_smooth(traj)
    dim = traj.filtered[0].dim
    out = np.empty((count, n, dim))
    out[:, n - 1, :] = randvars.sample(smoothed[-1], rng, count)
    for k in range(n - 2, -1, -1):
        f_k = traj.filtered[k]
        p_next = traj.predicted[k + 1]
        G = _smoother_gain(f_k, traj.transitions[k], p_next)
        cond_cov = f_k.cov - G @ p_next.cov @ G.T
        factor = cholesky_with_jitter(0.5 * (cond_cov + cond_cov.T))
        z = rng.standard_normal((count, dim))
        cond_mean = f_k.mean + (out[:, k + 1, :] - p_next.mean) @ G.T
        out[:, k, :] = cond_mean + z @ factor.T
    return out
