# %% [markdown]
# # The unnormalized recursion
#
# Multiplying the risk by the marginal density of the observed incomes
# removes the posterior normalization from the Bellman recursion.  The
# resulting table ``tR`` should equal ``R`` times that marginal, which this
# demo checks directly.

# %%
from __future__ import annotations

import numpy as np

from expbandit import DiscretePrior, GridSpec, risk_unnorm_forced_start, risk_with_forced_start, solve_exact, solve_unnorm
from expbandit.model import marginal_grid

prior = DiscretePrior.symmetric_two_point(1.0, 0.3)
grid = GridSpec.for_prior(prior, 64)
N = 8

etable, erisk = solve_exact(prior, N, grid)
utable, urisk = solve_unnorm(prior, N, grid)
print(f"risk, normalized recursion:   {erisk:.6f}")
print(f"risk, unnormalized recursion: {urisk:.6f}")

# %% [markdown]
# ## Slice by slice
#
# For each pair of counts, compare ``tR`` with the exact risk times the
# marginal, relative to the largest ``tR`` in that slice.

# %%
for n1, n2 in [(1, 0), (1, 1), (2, 3), (4, 3)]:
    x1, x2 = etable.axes(n1, n2)
    ref = etable.R(n1, n2) * marginal_grid(prior, x1[:, None], n1, x2[None, :], n2)
    tR = utable.tR(n1, n2)
    print(f"(n1, n2)=({n1}, {n2}): max deviation {np.abs(tR - ref).max() / tR.max():.2e}")

# %% [markdown]
# ## Starting with a fixed number of pulls of each arm
#
# Forcing ``n0`` initial pulls of each arm costs some regret.  Both recursions
# give the same price, and it is never below the unconstrained optimum.

# %%
for n0 in (1, 2, 3):
    a = risk_with_forced_start(prior, N, n0, grid)
    b = risk_unnorm_forced_start(prior, N, n0, grid)
    print(f"n0={n0}: {a:.6f} (normalized)  {b:.6f} (unnormalized)  vs free {erisk:.6f}")
