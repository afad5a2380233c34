"""Filtering-based probabilistic ODE solver.

The solver runs a square-root Kalman filter on the integrated-Wiener-process
prior in preconditioned coordinates, linearizing the ODE residual with a
zeroth- or first-order (Jacobian) scheme, adapts steps from a per-step
calibrated local error estimate, calibrates a global diffusion scale by
quasi-maximum likelihood, smooths backward, and supports dense output and
posterior sampling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .. import filtsmooth
from ..errors import NumericalError, SolverFailure
from ..filtsmooth import (
    FilterTrajectory,
    GaussianTransition,
    LinearObservationModel,
    rts_smooth,
    sqrt_predict,
    sqrt_update,
)
from ..randvars import GaussianBelief
from .ivp import IVP
from .prior import IWPPrior, iwp_discretize, precondition

__all__ = [
    "ODEPosterior",
    "StepRecord",
    "adapt_step",
    "calibrate_diffusion",
    "ek_linearize",
    "odefilter_step",
    "solve_ivp",
    "taylor_init",
]

_MODES = ("ek0", "ek1")


def taylor_init(ivp: IVP, prior: IWPPrior) -> GaussianBelief:
    """Initial belief over the full derivative stack at t0.

    Derivative 0 is y0 and derivative 1 is f(y0, t0), both exact. Higher
    derivatives are estimated by recursive first-order forward differences of
    f along the flow; their variance is inflated by 10^(2(k-1)) on the k-th
    derivative's unit scale. Non-finite estimates fall back to zero mean with
    unit-scale variance and a recorded warning.
    """
    d, q = ivp.dim, prior.q
    if prior.d != d:
        raise ValueError(f"prior is for dimension {prior.d}, IVP has {d}")
    y0, t0 = ivp.y0, ivp.t0
    delta = 1e-6 * (1.0 + float(np.linalg.norm(y0)))

    derivs = np.zeros((q + 1, d))
    variances = np.zeros((q + 1, d))
    derivs[0] = y0
    derivs[1] = ivp.eval_f(y0, t0)

    def flow_derivative(g):
        # Differentiates g along the flow: (d/dt) g(y(t), t).
        def dg(y, t):
            return (g(y + delta * ivp.eval_f(y, t), t + delta) - g(y, t)) / delta

        return dg

    g = ivp.eval_f
    for k in range(2, q + 1):
        g = flow_derivative(g)
        est = g(y0, t0)
        if np.all(np.isfinite(est)):
            derivs[k] = est
            variances[k] = 10.0 ** (2 * (k - 1)) * (1.0 + np.abs(est)) ** 2
        else:
            warnings.warn(
                f"non-finite derivative-{k} estimate during initialization; "
                "falling back to zero mean with unit-scale variance",
                RuntimeWarning,
                stacklevel=2,
            )
            derivs[k] = 0.0
            variances[k] = 1.0

    # Dimension-major stack: (y_1, y_1', ..., y_1^(q), y_2, ...).
    mean = derivs.T.reshape(-1)
    var = variances.T.reshape(-1)
    factor = np.diag(np.sqrt(var))
    return GaussianBelief.from_factor(mean, factor)


def _projections(dim: int, state_dim: int) -> tuple[np.ndarray, np.ndarray]:
    q_plus_1, rem = divmod(state_dim, dim)
    if rem or q_plus_1 < 2:
        raise ValueError(
            f"state dimension {state_dim} is not a derivative stack over {dim} dimensions"
        )
    e0 = np.zeros(q_plus_1)
    e0[0] = 1.0
    e1 = np.zeros(q_plus_1)
    e1[1] = 1.0
    eye = np.eye(dim)
    return np.kron(eye, e0[None, :]), np.kron(eye, e1[None, :])


def ek_linearize(
    ivp: IVP, state_pred: GaussianBelief, t: float, mode: str
) -> LinearObservationModel:
    """Affine observation model for the ODE residual at the predicted mean.

    The residual is m(x) = E1 x - f(E0 x, t) with E0, E1 the derivative-0 and
    derivative-1 projections. Mode "ek0" uses H = E1; "ek1" uses
    H = E1 - J_f(E0 mean, t) E0. The offset makes the affine model exact at
    the predicted mean, and the noise is zero (exact ODE information).
    """
    mode = mode.lower()
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    E0, E1 = _projections(ivp.dim, state_pred.dim)
    mean = state_pred.mean
    y_hat = E0 @ mean
    f_val = ivp.eval_f(y_hat, t)
    if not np.all(np.isfinite(f_val)):
        raise NumericalError(f"non-finite vector field at t = {t}")
    if mode == "ek0":
        H = E1
    else:
        J = ivp.eval_jacobian(y_hat, t)
        if not np.all(np.isfinite(J)):
            raise NumericalError(f"non-finite Jacobian at t = {t}")
        H = E1 - J @ E0
    residual_at_mean = E1 @ mean - f_val
    c = residual_at_mean - H @ mean
    return LinearObservationModel(H, np.zeros((ivp.dim, ivp.dim)), c)


def calibrate_diffusion(residuals) -> float:
    """Global quasi-maximum-likelihood diffusion from unit-scale innovations.

    Args:
        residuals: Sequence of (z, S_unit) pairs where each S_unit was
            computed under unit diffusion.

    Returns:
        sigma^2 = (1 / (N d)) sum_n z_n^T S_n^{-1} z_n, nonnegative.
    """
    residuals = list(residuals)
    if not residuals:
        raise ValueError("need at least one step to calibrate")
    total = 0.0
    count = 0
    for z, S in residuals:
        z = np.asarray(z, dtype=float).reshape(-1)
        S = np.atleast_2d(np.asarray(S, dtype=float))
        try:
            factor = cho_factor(S, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular unit innovation covariance") from exc
        total += float(z @ cho_solve(factor, z))
        count += z.size
    return max(total / count, 0.0)


@dataclass(frozen=True)
class StepRecord:
    """One attempted step of the adaptive loop."""

    t: float
    h: float
    error_ratio: float
    accepted: bool


@dataclass(frozen=True)
class _StepResult:
    filtered: GaussianBelief
    predicted: GaussianBelief
    local_error: np.ndarray
    z: np.ndarray
    S: np.ndarray
    t_new: float


def odefilter_step(
    state: GaussianBelief, ivp: IVP, t: float, h: float, mode: str, prior: IWPPrior
) -> _StepResult:
    """One preconditioned square-root predict/linearize/update step.

    The local error estimate combines the per-step calibration
    sigma2_local = z^T S_unit^{-1} z / d with the solution-projected
    process-noise scale of the step, which makes it scale like h^(q+1); it is
    used for step-size control only. Deterministic given its inputs.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    d = ivp.dim
    unit_prior = IWPPrior(prior.q, prior.d, diffusion=1.0)
    T, T_inv, trans_pre = precondition(unit_prior, h)

    state_pre = GaussianBelief.from_factor(
        T_inv * state.mean, T_inv[:, None] * state.cov_factor
    )
    pred_pre = sqrt_predict(state_pre, trans_pre)
    predicted = GaussianBelief.from_factor(
        T * pred_pre.mean, T[:, None] * pred_pre.cov_factor
    )

    t_new = t + h
    model = ek_linearize(ivp, predicted, t_new, mode)
    model_pre = LinearObservationModel(model.H * T[None, :], model.R, model.c)
    post_pre, innovation = sqrt_update(pred_pre, model_pre, np.zeros(d))
    filtered = GaussianBelief.from_factor(
        T * post_pre.mean, T[:, None] * post_pre.cov_factor
    )

    z = innovation.mean
    S_factor = innovation.cov_factor
    whitened = solve_triangular(S_factor, z, lower=True)
    sigma2_local = float(whitened @ whitened) / d
    # Unit-diffusion process noise projected onto the solution component.
    q = prior.q
    q00 = h ** (2 * q + 1) / ((2 * q + 1) * factorial(q) ** 2)
    local_error = np.full(d, np.sqrt(sigma2_local * q00))
    if not (
        np.all(np.isfinite(filtered.mean))
        and np.all(np.isfinite(local_error))
    ):
        raise NumericalError(f"non-finite values in the step ending at t = {t_new}")
    return _StepResult(
        filtered=filtered,
        predicted=predicted,
        local_error=local_error,
        z=z,
        S=innovation.cov,
        t_new=t_new,
    )


def adapt_step(
    local_error: np.ndarray,
    atol: float,
    rtol: float,
    reference: np.ndarray,
    h: float,
    q: int,
) -> tuple[bool, float, float]:
    """Accept/reject a proposal and choose the next step size.

    E is the RMS over dimensions of local_error / (atol + rtol |reference|);
    the step is accepted iff E <= 1 and the next step is
    h * clamp(0.95 E^(-1/(q+1)), 0.2, 10).

    Returns:
        (accept, h_next, E).
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    scale = atol + rtol * np.abs(np.asarray(reference, dtype=float))
    ratios = np.asarray(local_error, dtype=float) / scale
    E = float(np.sqrt(np.mean(ratios**2)))
    if E == 0.0:
        factor = 10.0
    else:
        factor = min(max(0.95 * E ** (-1.0 / (q + 1)), 0.2), 10.0)
    return E <= 1.0, h * factor, E


class ODEPosterior:
    """Smoothing posterior of a filtering-based ODE solve.

    Calling the posterior at a time t returns the Gaussian belief over the
    full derivative stack; :meth:`solution` projects onto the solution values.
    Evaluation at grid nodes returns the stored smoothed states; off-grid
    times insert a predict-only node and re-smooth locally against the next
    stored state.
    """

    def __init__(
        self,
        ivp: IVP,
        prior: IWPPrior,
        trajectory: FilterTrajectory,
        smoothed_unit,
        sigma2: float,
        steps: tuple[StepRecord, ...],
    ):
        self._ivp = ivp
        self._prior = IWPPrior(prior.q, prior.d, diffusion=1.0)
        self._traj = trajectory
        self._smoothed_unit = tuple(smoothed_unit)
        self.sigma2 = float(sigma2)
        self.steps = tuple(steps)
        scale = np.sqrt(self.sigma2)
        self._states = tuple(
            GaussianBelief.from_factor(rv.mean, scale * rv.cov_factor)
            for rv in self._smoothed_unit
        )
        times = trajectory.times
        if not (times[0] == ivp.t0 and times[-1] == ivp.tmax):
            raise ValueError("grid must cover [t0, tmax]")
        E0, _ = _projections(ivp.dim, self._states[0].dim)
        if not np.allclose(E0 @ self._states[0].mean, ivp.y0, rtol=0, atol=1e-12):
            raise ValueError("solution projection at t0 must have mean y0")
        self._E0 = E0

    @property
    def times(self) -> np.ndarray:
        return self._traj.times

    @property
    def states(self) -> tuple[GaussianBelief, ...]:
        """Calibrated smoothed beliefs over the full stack, one per grid node."""
        return self._states

    @property
    def trajectory(self) -> FilterTrajectory:
        return self._traj

    def __call__(self, t: float) -> GaussianBelief:
        times = self._traj.times
        if t < times[0] or t > times[-1]:
            raise ValueError(f"evaluation time {t} outside [{times[0]}, {times[-1]}]")
        idx = int(np.searchsorted(times, t))
        if idx < times.size and times[idx] == t:
            return self._states[idx]
        k = idx - 1
        delta = float(t - times[k])
        delta_next = float(times[k + 1] - t)
        trans_to_t = iwp_discretize(self._prior, delta)
        pred_t = filtsmooth.predict(self._traj.filtered[k], trans_to_t)
        trans_onward = iwp_discretize(self._prior, delta_next)
        pred_next = filtsmooth.predict(pred_t, trans_onward)
        G = filtsmooth._smoother_gain(pred_t, trans_onward, pred_next)
        s_next = self._smoothed_unit[k + 1]
        mean = pred_t.mean + G @ (s_next.mean - pred_next.mean)
        cov = pred_t.cov + G @ (s_next.cov - pred_next.cov) @ G.T
        return GaussianBelief(mean, self.sigma2 * 0.5 * (cov + cov.T))

    def solution(self, t: float) -> GaussianBelief:
        """Belief over the solution values y(t) (derivative 0 of every dimension)."""
        state = self(t)
        mean = self._E0 @ state.mean
        cov = self._E0 @ state.cov @ self._E0.T
        return GaussianBelief(mean, 0.5 * (cov + cov.T))

    def solution_states(self) -> tuple[GaussianBelief, ...]:
        """Solution-projected beliefs at every grid node."""
        out = []
        for state in self._states:
            cov = self._E0 @ state.cov @ self._E0.T
            out.append(GaussianBelief(self._E0 @ state.mean, 0.5 * (cov + cov.T)))
        return tuple(out)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Joint posterior trajectories over the grid, shape (count, grid, stack)."""
        scaled_filtered = tuple(
            GaussianBelief.from_factor(rv.mean, np.sqrt(self.sigma2) * rv.cov_factor)
            for rv in self._traj.filtered
        )
        scaled_predicted = tuple(
            GaussianBelief.from_factor(rv.mean, np.sqrt(self.sigma2) * rv.cov_factor)
            for rv in self._traj.predicted
        )
        scaled_transitions = tuple(
            GaussianTransition(tr.Phi, self.sigma2 * tr.Q, tr.b)
            for tr in self._traj.transitions
        )
        traj = FilterTrajectory(
            self._traj.times, scaled_filtered, scaled_predicted, scaled_transitions
        )
        return filtsmooth.sample_posterior(traj, rng, count, smoothed=self._states)


def solve_ivp(
    ivp,
    t_span=None,
    y0=None,
    method: str | None = None,
    rtol: float = 1e-6,
    atol: float = 1e-8,
    *,
    q: int = 2,
    mode: str | None = None,
    jacobian=None,
    fixed_grid=None,
    first_step: float | None = None,
) -> ODEPosterior:
    """Solve an initial value problem with the filtering-based solver.

    Runs Taylor initialization, adaptive (or fixed-grid) filtering in
    preconditioned square-root form with unit diffusion, global quasi-MLE
    calibration of the diffusion, and backward smoothing. Dense output and
    posterior sampling are available on the returned :class:`ODEPosterior`.

    Accepts either an :class:`IVP` as the single problem argument or the
    classic solver calling convention ``solve_ivp(f, t_span, y0, method,
    rtol, atol)``.

    Args:
        ivp: The initial value problem, or a vector field (y, t) -> dy/dt.
        t_span: (t0, tmax) when a bare vector field is given.
        y0: Initial value when a bare vector field is given.
        method: "ek0" or "ek1" residual linearization (alias of ``mode``).
        rtol: Relative step-control tolerance.
        atol: Absolute step-control tolerance.
        q: Derivative order of the integrated-Wiener-process prior.
        mode: Same as ``method``; takes precedence when both are given.
        jacobian: Optional Jacobian for a bare vector field.
        fixed_grid: Optional strictly increasing grid from t0 to tmax; when
            given, steps are not adapted.
        first_step: Optional initial step size for the adaptive loop.
    """
    if not isinstance(ivp, IVP):
        if t_span is None or y0 is None:
            raise ValueError("bare vector fields need t_span and y0")
        ivp = IVP(
            f=ivp, t0=float(t_span[0]), tmax=float(t_span[1]), y0=y0, jacobian=jacobian
        )
    mode = mode if mode is not None else (method if method is not None else "ek1")
    prior = IWPPrior(q=q, d=ivp.dim)
    state = taylor_init(ivp, prior)
    E0, _ = _projections(ivp.dim, state.dim)

    times = [float(ivp.t0)]
    filtered = [state]
    predicted = [state]
    transitions: list[GaussianTransition] = []
    residuals: list[tuple[np.ndarray, np.ndarray]] = []
    steps: list[StepRecord] = []
    span = float(ivp.tmax - ivp.t0)
    min_step = 1e-14 * span

    if fixed_grid is not None:
        grid = np.asarray(fixed_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("fixed_grid must contain at least t0 and tmax")
        if grid[0] != ivp.t0 or grid[-1] != ivp.tmax:
            raise ValueError("fixed_grid must start at t0 and end at tmax")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("fixed_grid must be strictly increasing")
        for k in range(grid.size - 1):
            t, h = float(grid[k]), float(grid[k + 1] - grid[k])
            try:
                result = odefilter_step(state, ivp, t, h, mode, prior)
            except NumericalError as exc:
                raise SolverFailure(
                    f"fixed-grid step failed at t = {t}: {exc}", t_reached=t
                ) from exc
            state = result.filtered
            times.append(float(grid[k + 1]))
            filtered.append(result.filtered)
            predicted.append(result.predicted)
            transitions.append(iwp_discretize(prior, h))
            residuals.append((result.z, result.S))
            steps.append(StepRecord(t=t, h=h, error_ratio=float("nan"), accepted=True))
    else:
        t = float(ivp.t0)
        h = first_step if first_step is not None else span / 100.0
        while t < ivp.tmax:
            h = min(h, ivp.tmax - t)
            if h < min_step:
                raise SolverFailure(
                    f"step size underflow ({h:.3e}) at t = {t}", t_reached=t
                )
            final_step = h >= (ivp.tmax - t)
            try:
                result = odefilter_step(state, ivp, t, h, mode, prior)
            except NumericalError:
                steps.append(StepRecord(t=t, h=h, error_ratio=float("inf"), accepted=False))
                h = 0.5 * h
                continue
            reference = np.maximum(
                np.abs(E0 @ state.mean), np.abs(E0 @ result.filtered.mean)
            )
            accept, h_next, ratio = adapt_step(
                result.local_error, atol, rtol, reference, h, q
            )
            steps.append(StepRecord(t=t, h=h, error_ratio=ratio, accepted=accept))
            if accept:
                t_new = float(ivp.tmax) if final_step else result.t_new
                state = result.filtered
                times.append(t_new)
                filtered.append(result.filtered)
                predicted.append(result.predicted)
                transitions.append(iwp_discretize(prior, h))
                residuals.append((result.z, result.S))
                t = t_new
            h = h_next

    sigma2 = calibrate_diffusion(residuals) if residuals else 0.0
    traj = FilterTrajectory(
        np.asarray(times), tuple(filtered), tuple(predicted), tuple(transitions)
    )
    smoothed = rts_smooth(traj)
    return ODEPosterior(ivp, prior, traj, smoothed, sigma2, tuple(steps))
