"""Time-uniform PAC-Bayes confidence intervals from coin-betting concentration."""

from .bounds import ConfidenceInterval
from .core_math import (
    DEFAULT_TOL,
    DiscreteDistribution,
    PsiStarResult,
    SolverError,
    SolverTolerances,
    bernoulli_kl,
    discrete_kl,
    kl_lower_inverse,
    kl_upper_inverse,
    log_wealth,
    psi_star,
    regret_budget,
)
from .montecarlo import McConfig, run_boosted_mc, run_maurer_mc
from .optimizer import FiniteSupportProblem, finite_interval, solve_bound

__all__ = [
    "DEFAULT_TOL", "ConfidenceInterval", "DiscreteDistribution", "FiniteSupportProblem",
    "McConfig", "PsiStarResult", "SolverError", "SolverTolerances", "bernoulli_kl",
    "discrete_kl", "finite_interval", "kl_lower_inverse", "kl_upper_inverse", "log_wealth",
    "psi_star", "regret_budget", "run_boosted_mc", "run_maurer_mc", "solve_bound",
]
