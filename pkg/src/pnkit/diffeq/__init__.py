"""Probabilistic ODE solvers: filtering-based and perturbation-based."""

from .ivp import IVP
from .odefilter import (
    ODEPosterior,
    StepRecord,
    adapt_step,
    calibrate_diffusion,
    ek_linearize,
    odefilter_step,
    solve_ivp,
    taylor_init,
)
from .perturbed import (
    EULER,
    RK4,
    ButcherTableau,
    PerturbedSolution,
    perturbed_solve,
    rk_solve,
)
from .prior import IWPPrior, iwp_discretize, precondition

__all__ = [
    "EULER",
    "IVP",
    "IWPPrior",
    "ODEPosterior",
    "PerturbedSolution",
    "RK4",
    "ButcherTableau",
    "StepRecord",
    "adapt_step",
    "calibrate_diffusion",
    "ek_linearize",
    "iwp_discretize",
    "odefilter_step",
    "perturbed_solve",
    "precondition",
    "rk_solve",
    "solve_ivp",
    "taylor_init",
]
