"""Perturbation-based classic ODE solvers.

A deterministic explicit Runge-Kutta method is made stochastic by randomizing
its step sizes: each ensemble member draws increments h_n i.i.d. uniform on
[h - delta, h + delta] with delta = scale * h^(p + 1/2) (truncated to 0.9 h),
advances its internal clock by h_n, and is regarded on the common nominal
output grid. The ensemble spread quantifies discretization uncertainty; scale
zero reproduces the deterministic base method exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError
from .ivp import IVP

__all__ = ["ButcherTableau", "EULER", "RK4", "PerturbedSolution", "perturbed_solve", "rk_solve"]


@dataclass(frozen=True)
class ButcherTableau:
    """Explicit Runge-Kutta tableau."""

    nodes: tuple[float, ...]
    coeffs: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]
    order: int


EULER = ButcherTableau(nodes=(0.0,), coeffs=((),), weights=(1.0,), order=1)
RK4 = ButcherTableau(
    nodes=(0.0, 0.5, 0.5, 1.0),
    coeffs=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
    weights=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
    order=4,
)

_TABLEAUS = {"euler": EULER, "rk4": RK4}


def _resolve_tableau(base_method) -> ButcherTableau:
    if isinstance(base_method, ButcherTableau):
        return base_method
    try:
        return _TABLEAUS[str(base_method).lower()]
    except KeyError:
        raise ValueError(
            f"unknown base method {base_method!r}; choose from {sorted(_TABLEAUS)}"
        ) from None


def _rk_step(ivp: IVP, t: float, y: np.ndarray, h: float, tab: ButcherTableau):
    """One explicit RK step; returns (y_next, f(t, y))."""
    stages = [ivp.eval_f(y, t)]
    for node, row in zip(tab.nodes[1:], tab.coeffs[1:]):
        increment = sum(a * k for a, k in zip(row, stages) if a != 0.0)
        y_stage = y + h * increment if row else y
        stages.append(ivp.eval_f(y_stage, t + node * h))
    y_next = y + h * sum(w * k for w, k in zip(tab.weights, stages))
    return y_next, stages[0]


def _integrate_member(ivp: IVP, tab: ButcherTableau, grid: np.ndarray, h_nominal: float,
                      delta: float, rng: np.random.Generator | None):
    """States and slopes on the nominal grid for one (possibly perturbed) member."""
    n_steps = grid.size - 1
    d = ivp.dim
    states = np.empty((n_steps + 1, d))
    slopes = np.empty((n_steps + 1, d))
    states[0] = ivp.y0
    clock = float(ivp.t0)
    y = ivp.y0.copy()
    for j in range(n_steps):
        if delta > 0.0 and rng is not None:
            h_n = float(rng.uniform(h_nominal - delta, h_nominal + delta))
        else:
            h_n = h_nominal
        y, f_here = _rk_step(ivp, clock, y, h_n, tab)
        slopes[j] = f_here
        clock += h_n
        states[j + 1] = y
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state after step {j + 1}")
    slopes[n_steps] = ivp.eval_f(y, clock)
    return states, slopes


def _hermite_eval(t, grid, states, slopes, h):
    """Cubic Hermite interpolation of one trajectory on the nominal grid."""
    idx = int(np.searchsorted(grid, t))
    if idx < grid.size and grid[idx] == t:
        return states[idx]
    if t < grid[0] or t > grid[-1]:
        raise ValueError(f"evaluation time {t} outside [{grid[0]}, {grid[-1]}]")
    k = idx - 1
    s = (t - grid[k]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s**2 * (3 - 2 * s)
    h11 = s**2 * (s - 1)
    return (
        h00 * states[k]
        + h10 * h * slopes[k]
        + h01 * states[k + 1]
        + h11 * h * slopes[k + 1]
    )


def _centered_std(values: np.ndarray, ddof: int) -> np.ndarray:
    """Ensemble std, exactly zero for bit-identical members.

    Centering on the first member keeps degenerate (scale = 0) ensembles at
    exactly zero spread instead of mean-rounding noise.
    """
    if values.shape[0] <= ddof:
        return np.zeros(values.shape[1:])
    return (values - values[:1]).std(axis=0, ddof=ddof)


class PerturbedSolution:
    """Ensemble of randomized-step trajectories on a common output grid."""

    def __init__(self, times, ensemble, slopes, order, scale, h_nominal, excluded):
        self.times = np.asarray(times, dtype=float)
        self.ensemble = np.asarray(ensemble, dtype=float)
        self._slopes = np.asarray(slopes, dtype=float)
        self.order = int(order)
        self.scale = float(scale)
        self.h_nominal = float(h_nominal)
        self.excluded = int(excluded)

    @property
    def size(self) -> int:
        return self.ensemble.shape[0]

    def mean(self) -> np.ndarray:
        """Ensemble mean per grid node, shape (grid, dim)."""
        return self.ensemble.mean(axis=0)

    def std(self, ddof: int = 1) -> np.ndarray:
        return _centered_std(self.ensemble, ddof)

    def at(self, t: float) -> np.ndarray:
        """Per-member values at time t (interpolated off-grid), shape (members, dim)."""
        return np.stack(
            [
                _hermite_eval(t, self.times, self.ensemble[i], self._slopes[i], self.h_nominal)
                for i in range(self.size)
            ]
        )

    def mean_at(self, t: float) -> np.ndarray:
        return self.at(t).mean(axis=0)

    def std_at(self, t: float, ddof: int = 1) -> np.ndarray:
        return _centered_std(self.at(t), ddof)


def rk_solve(ivp: IVP, base_method="rk4", h: float = 0.1):
    """Deterministic base Runge-Kutta solve on the nominal grid.

    Returns:
        (times, states) with states of shape (grid, dim).
    """
    tab = _resolve_tableau(base_method)
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    span = float(ivp.tmax - ivp.t0)
    n_steps = max(1, int(round(span / h)))
    h_nominal = span / n_steps
    grid = ivp.t0 + h_nominal * np.arange(n_steps + 1)
    grid[-1] = ivp.tmax
    states, _ = _integrate_member(ivp, tab, grid, h_nominal, 0.0, None)
    return grid, states


def perturbed_solve(
    ivp: IVP,
    base_method="rk4",
    h: float = 0.1,
    scale: float = 1.0,
    ensemble_size: int = 100,
    rng: np.random.Generator | None = None,
) -> PerturbedSolution:
    """Ensemble solve with i.i.d. uniformly randomized step increments.

    Each member owns an independent substream spawned from ``rng``, so results
    do not depend on scheduling; a fixed seed gives a bit-identical ensemble.
    Members with non-finite states are flagged and excluded from the ensemble,
    with the count reported on the result.
    """
    tab = _resolve_tableau(base_method)
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if scale < 0:
        raise ValueError(f"scale must be nonnegative, got {scale}")
    if ensemble_size < 1:
        raise ValueError(f"ensemble_size must be >= 1, got {ensemble_size}")
    if rng is None:
        rng = np.random.default_rng(0)

    span = float(ivp.tmax - ivp.t0)
    n_steps = max(1, int(round(span / h)))
    h_nominal = span / n_steps
    grid = ivp.t0 + h_nominal * np.arange(n_steps + 1)
    grid[-1] = ivp.tmax
    delta = min(scale * h_nominal ** (tab.order + 0.5), 0.9 * h_nominal)

    substreams = rng.spawn(ensemble_size)
    kept_states, kept_slopes = [], []
    excluded = 0
    for member_rng in substreams:
        try:
            states, slopes = _integrate_member(ivp, tab, grid, h_nominal, delta, member_rng)
        except NumericalError:
            excluded += 1
            continue
        kept_states.append(states)
        kept_slopes.append(slopes)
    if not kept_states:
        raise NumericalError(
            f"all {ensemble_size} ensemble members produced non-finite states"
        )
    return PerturbedSolution(
        times=grid,
        ensemble=np.stack(kept_states),
        slopes=np.stack(kept_slopes),
        order=tab.order,
        scale=scale,
        h_nominal=h_nominal,
        excluded=excluded,
    )
