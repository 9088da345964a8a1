# %% [markdown]
# # Monte Carlo regret of the optimal strategy and two heuristics
#
# Each replication draws the arm means from the prior, then plays ``N``
# pulls.  Every replication has its own random stream, so results do not
# depend on the number of worker threads.

# %%
from __future__ import annotations

import logging

from expbandit import (DPPolicy, DiscretePrior, EpsilonGreedy, Greedy, GridSpec, Theta, bayes_regret_mc,
                       simulate_strategy, solve_exact)

logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

prior = DiscretePrior.symmetric_two_point(1.0, 0.3)
N = 20
table, risk = solve_exact(prior, N, GridSpec.for_prior(prior, 128))
print(f"Bayes risk from the solver: {risk:.4f}")

# %% [markdown]
# ## Bayesian regret
#
# The optimal strategy's simulated regret should match the solver within a
# few standard errors, and beat the greedy rules.

# %%
policies = [DPPolicy(table), Greedy(prior), EpsilonGreedy(prior, 0.1)]
for pol in policies:
    est = bayes_regret_mc(pol, prior, N, seed=7, replications=40_000, threads=2)
    print(f"{pol.name:>16}: {est.mean:.4f} +- {est.std_error:.4f}")

# %% [markdown]
# ## Regret at a fixed parameter
#
# Conditional on the arm means, the same strategies can be compared on a
# single instance.

# %%
theta = Theta(1.3, 0.7)
for pol in policies:
    est = simulate_strategy(pol, theta, N, seed=11, replications=20_000)
    print(f"{pol.name:>16} at {theta}: {est.mean:.4f} +- {est.std_error:.4f}")
