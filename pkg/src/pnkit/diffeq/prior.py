"""Integrated-Wiener-process prior: exact discretization and preconditioning.

The prior models each ODE dimension as a q-times integrated Wiener process
over the stack (y, y', ..., y^(q)); the full state of dimension d*(q+1) is the
Kronecker lift across dimensions (dimension-major layout). The step-size
preconditioner maps every step to a fixed, well-scaled transition pair, which
is what keeps the filter stable at small steps and high orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from ..filtsmooth import GaussianTransition

__all__ = ["IWPPrior", "iwp_discretize", "precondition"]


@dataclass(frozen=True)
class IWPPrior:
    """q-times integrated Wiener process prior over a d-dimensional ODE state.

    Args:
        q: Number of modeled derivatives, 1 <= q <= 5.
        d: ODE dimension.
        diffusion: Process noise scale sigma^2 (calibrated after a solve).
    """

    q: int
    d: int
    diffusion: float = 1.0

    def __post_init__(self):
        if not 1 <= self.q <= 5:
            raise ValueError(f"q must be in [1, 5], got {self.q}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not self.diffusion > 0:
            raise ValueError(f"diffusion must be positive, got {self.diffusion}")

    @property
    def state_dim(self) -> int:
        return self.d * (self.q + 1)

    def projection(self, derivative: int) -> np.ndarray:
        """Matrix selecting the given derivative of every dimension."""
        if not 0 <= derivative <= self.q:
            raise ValueError(f"derivative must be in [0, {self.q}]")
        e = np.zeros(self.q + 1)
        e[derivative] = 1.0
        return np.kron(np.eye(self.d), e[None, :])


def _phi_single(q: int, h: float) -> np.ndarray:
    phi = np.zeros((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(i, q + 1):
            phi[i, j] = h ** (j - i) / factorial(j - i)
    return phi


def _q_single(q: int, h: float, diffusion: float) -> np.ndarray:
    Q = np.zeros((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(q + 1):
            power = 2 * q + 1 - i - j
            Q[i, j] = diffusion * h**power / (power * factorial(q - i) * factorial(q - j))
    return Q


def iwp_discretize(prior: IWPPrior, h: float) -> GaussianTransition:
    """Exact transition of the integrated Wiener process over a step h.

    Per-dimension blocks Phi(h)[i, j] = h^(j-i)/(j-i)! for j >= i and
    Q(h)[i, j] = sigma^2 h^(2q+1-i-j) / ((2q+1-i-j) (q-i)! (q-j)!).
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    phi = _phi_single(prior.q, h)
    Q = _q_single(prior.q, h, prior.diffusion)
    if prior.d > 1:
        eye = np.eye(prior.d)
        phi = np.kron(eye, phi)
        Q = np.kron(eye, Q)
    return GaussianTransition(phi, Q)


def precondition(prior: IWPPrior, h: float):
    """Step-dependent coordinate change T(h) and step-independent transition pair.

    Returns (T, T_inv, transition) with diagonal T as 1-D arrays and a
    GaussianTransition (Phi_bar, Q_bar) such that
    T Phi_bar T^{-1} = Phi(h) and T Q_bar T^T = Q(h).
    All filter steps of :func:`pnkit.diffeq.solve_ivp` run in the
    preconditioned coordinates.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    q = prior.q
    idx = np.arange(q + 1)
    scales = np.sqrt(h) * h ** (q - idx) / np.array([factorial(q - i) for i in idx])
    phi_bar = np.zeros((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(i, q + 1):
            phi_bar[i, j] = factorial(q - i) / (factorial(j - i) * factorial(q - j))
    q_bar = np.empty((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(q + 1):
            q_bar[i, j] = prior.diffusion / (2 * q + 1 - i - j)
    if prior.d > 1:
        eye = np.eye(prior.d)
        scales = np.tile(scales, prior.d)
        phi_bar = np.kron(eye, phi_bar)
        q_bar = np.kron(eye, q_bar)
    return scales, 1.0 / scales, GaussianTransition(phi_bar, q_bar)
