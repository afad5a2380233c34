"""Initial value problem description."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["IVP"]


@dataclass(frozen=True)
class IVP:
    """dy/dt = f(y, t) on [t0, tmax] with y(t0) = y0.

    Args:
        f: Vector field (y, t) -> dy/dt of dimension d.
        t0: Initial time.
        tmax: Final time, strictly greater than t0.
        y0: Initial value of length d.
        jacobian: Optional (y, t) -> d-by-d Jacobian of f in y; first-order
            linearizations fall back to finite differences without it.
    """

    f: Callable[[np.ndarray, float], np.ndarray]
    t0: float
    tmax: float
    y0: np.ndarray
    jacobian: Callable[[np.ndarray, float], np.ndarray] | None = None

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if y0.ndim != 1:
            raise ValueError(f"y0 must be a vector, got shape {y0.shape}")
        if not self.tmax > self.t0:
            raise ValueError(f"need tmax > t0, got [{self.t0}, {self.tmax}]")
        f0 = np.atleast_1d(np.asarray(self.f(y0, self.t0), dtype=float))
        if f0.shape != y0.shape:
            raise ValueError(
                f"f(y0, t0) has shape {f0.shape}, expected {y0.shape}"
            )
        if not np.all(np.isfinite(f0)):
            raise ValueError("f(y0, t0) must be finite")
        object.__setattr__(self, "y0", y0)

    @property
    def dim(self) -> int:
        return self.y0.shape[0]

    def eval_f(self, y: np.ndarray, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.f(y, t), dtype=float))

    def eval_jacobian(self, y: np.ndarray, t: float) -> np.ndarray:
        """Jacobian of f in y; central finite differences when not provided."""
        if self.jacobian is not None:
            return np.atleast_2d(np.asarray(self.jacobian(y, t), dtype=float))
        d = self.dim
        step = 1e-6 * (1.0 + float(np.linalg.norm(y)))
        J = np.empty((d, d))
        for j in range(d):
            shift = np.zeros(d)
            shift[j] = step
            J[:, j] = (self.eval_f(y + shift, t) - self.eval_f(y - shift, t)) / (2 * step)
        return J
