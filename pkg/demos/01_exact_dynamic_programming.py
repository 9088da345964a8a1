# %% [markdown]
# # Optimal allocation between two exponential arms
#
# Two arms pay exponentially distributed incomes with unknown means.  The
# pair of means is drawn from a discrete prior, and over ``N`` pulls we want
# the strategy with the smallest expected regret.  The incomes seen so far
# enter only through the totals ``X1, X2`` and the counts ``n1, n2``.

# %%
from __future__ import annotations

import numpy as np

from expbandit import BanditState, DiscretePrior, GridSpec, extract_policy, posterior, solve_exact

prior = DiscretePrior.symmetric_two_point(1.0, 0.3)
print("means of arm 1:", prior.m1)
print("means of arm 2:", prior.m2)
print("weights:       ", prior.weights)

# %% [markdown]
# ## Posterior after a few pulls
#
# Three pulls of arm 1 that paid 4.2 in total, and two pulls of arm 2 that
# paid 1.7, favour the hypothesis in which arm 1 has the larger mean.

# %%
state = BanditState(X1=4.2, n1=3, X2=1.7, n2=2)
print("posterior weights:", posterior(prior, state).weights)

# %% [markdown]
# ## Backward induction
#
# ``solve_exact`` tabulates the branch risks ``R1`` and ``R2`` (the expected
# remaining regret when the next pull goes to arm 1 or arm 2) on an income grid
# for every pair of counts.  Halving the grid gives a quick resolution check.

# %%
grid = GridSpec.for_prior(prior, 128)
for N in (1, 2, 5, 10, 20):
    _, risk = solve_exact(prior, N, grid)
    _, coarse = solve_exact(prior, N, grid.halved())
    print(f"N={N:3d}  risk={risk:.6f}  (half grid {coarse:.6f})")

# %% [markdown]
# ## The optimal decision at a state
#
# The decision is the branch with the smaller risk; states where both
# branches agree within a tolerance are reported as ties.

# %%
table, _ = solve_exact(prior, 10, grid)
for X1 in (0.5, 1.5, 2.5, 3.5):
    s = BanditState(X1, 2, 2.0, 2)
    print(f"X1={X1:.1f}, X2=2.0 after two pulls each -> {extract_policy(table, s).name}")

# %% [markdown]
# On the diagonal ``n1 = n2`` the boundary between the two decisions is close
# to ``X1 = X2``, which the symmetry of the prior requires.

# %%
x1, x2 = table.axes(3, 3)
R1, R2 = table.R1[3, 3], table.R2[3, 3]
mask = (x1[:, None] <= 6) & (x2[None, :] <= 6)
agree = ((R1 < R2) == (x1[:, None] > x2[None, :]))[mask]
print(f"fraction of nodes on the expected side of X1 = X2: {agree.mean():.3f}")
