#!/usr/bin/env python3
"""Gaussian filtering and smoothing on a noisy tracking problem.

A constant-velocity target is observed through noisy position measurements.
The Kalman filter runs forward, the Rauch-Tung-Striebel smoother refines
backward, and joint posterior samples show trajectory-level uncertainty.
Square-root variants propagate covariance factors only.
"""

import numpy as np

from pnkit import filtsmooth
from pnkit.randvars import GaussianBelief

rng = np.random.default_rng(0)

# Constant-velocity model: state (position, velocity).
dt = 0.5
Phi = np.array([[1.0, dt], [0.0, 1.0]])
Q = 0.05 * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
H = np.array([[1.0, 0.0]])
R = np.array([[0.25]])

# Simulate a ground-truth trajectory and noisy measurements.
n_steps = 30
truth = np.zeros((n_steps + 1, 2))
truth[0] = [0.0, 1.0]
for k in range(n_steps):
    truth[k + 1] = Phi @ truth[k] + rng.multivariate_normal(np.zeros(2), Q)
measurements = truth[1:, 0] + 0.5 * rng.standard_normal(n_steps)

# Every fourth measurement goes missing; those are predict-only steps.
transitions = [filtsmooth.GaussianTransition(Phi, Q)] * n_steps
observations = [
    None if k % 4 == 3 else (filtsmooth.LinearObservationModel(H, R), np.atleast_1d(z))
    for k, z in enumerate(measurements)
]

initial = GaussianBelief([0.0, 0.0], np.diag([1.0, 1.0]))
trajectory = filtsmooth.kalman_filter(initial, transitions, observations)
smoothed = filtsmooth.rts_smooth(trajectory)

filtered_rmse = np.sqrt(
    np.mean([(trajectory.filtered[k].mean[0] - truth[k, 0]) ** 2 for k in range(n_steps + 1)])
)
smoothed_rmse = np.sqrt(
    np.mean([(smoothed[k].mean[0] - truth[k, 0]) ** 2 for k in range(n_steps + 1)])
)
print(f"position RMSE: filtered {filtered_rmse:.4f}, smoothed {smoothed_rmse:.4f}")
print("(smoothing uses future data, so it should win)")

# Joint samples carry the correlations the marginals hide.
draws = filtsmooth.sample_posterior(trajectory, np.random.default_rng(1), count=200)
mid = n_steps // 2
corr = np.corrcoef(draws[:, mid, 0], draws[:, mid + 1, 0])[0, 1]
print(f"posterior lag-1 position correlation at step {mid}: {corr:.3f}")

# Square-root path: same posterior through triangular factors only.
state = initial
state_sqrt = initial
for k in range(5):
    state = filtsmooth.predict(state, transitions[k])
    state_sqrt = filtsmooth.sqrt_predict(state_sqrt, transitions[k])
    if observations[k] is not None:
        model, y = observations[k]
        state, _ = filtsmooth.update(state, model, y)
        state_sqrt, _ = filtsmooth.sqrt_update(state_sqrt, model, y)
gap = np.max(np.abs(state.cov - state_sqrt.cov))
print(f"square-root vs vanilla after 5 steps: max covariance gap {gap:.2e}")
