"""Bayesian risk and optimal strategies for the exponential two-armed bandit.

Modules
-------
model
    Densities, discrete priors, posteriors.
exact_dp
    Backward induction with normalized posteriors.
unnorm_dp
    The same risk through the unnormalized recursion.
limit_solver
    Scaled integro-difference equations and the limiting HJB equation.
simulate
    Monte Carlo regret of strategies.
cli
    ``expbandit`` command-line tool.
"""

from .exact_dp import (GridSpec, PolicyDecision, ValueTable, extract_policy, risk_with_forced_start,
                       solve_exact)
from .limit_solver import (ScaledField, ScaledPrior, scaled_risk, solve_integro_difference_exponential,
                           solve_integro_difference_gaussian, solve_pde)
from .model import BanditState, DiscretePrior, Theta, posterior
from .simulate import (AlwaysArm, DPPolicy, EpsilonGreedy, ForcedStartThenDP, Greedy, RegretEstimate,
                       bayes_regret_mc, simulate_strategy)
from .unnorm_dp import risk_unnorm_forced_start, solve_unnorm

__version__ = "0.1.0"

__all__ = [
    "AlwaysArm", "BanditState", "DPPolicy", "DiscretePrior", "EpsilonGreedy", "ForcedStartThenDP",
    "Greedy", "GridSpec", "PolicyDecision", "RegretEstimate", "ScaledField", "ScaledPrior", "Theta",
    "ValueTable", "bayes_regret_mc", "extract_policy", "posterior", "risk_unnorm_forced_start",
    "risk_with_forced_start", "scaled_risk", "simulate_strategy", "solve_exact",
    "solve_integro_difference_exponential", "solve_integro_difference_gaussian", "solve_pde",
    "solve_unnorm",
]
