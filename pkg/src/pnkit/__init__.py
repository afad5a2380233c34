"""pnkit: probabilistic numerics toolkit.

Solvers for linear systems, ordinary differential equations, and integration
problems that return Gaussian beliefs over the quantity of interest instead of
point estimates. Solvers are assembled from swappable components (policies,
information operators, belief updates, stopping rules, perturbation
strategies) on top of shared subpackages for Gaussian random variables,
matrix-free linear operators, and Bayesian filtering and smoothing.
"""

from . import diffeq, filtsmooth, linalg, linops, problems, quad, randvars
from .diffeq import solve_ivp
from .linalg import problinsolve
from .quad import bayesian_monte_carlo, bq_integrate
from .randvars import GaussianBelief, MatrixGaussianBelief

__version__ = "0.1.0"

__all__ = [
    "GaussianBelief",
    "MatrixGaussianBelief",
    "bayesian_monte_carlo",
    "bq_integrate",
    "diffeq",
    "filtsmooth",
    "linalg",
    "linops",
    "problems",
    "problinsolve",
    "quad",
    "randvars",
    "solve_ivp",
]
