# %% [markdown]
# # Large-horizon limit
#
# With ``N`` large and arm means within ``O(1/sqrt(N))`` of each other, the
# risk divided by ``sqrt(D N)`` converges.  In scaled time ``t = n/N`` and
# scaled income the recursion becomes an integro-difference equation with
# step ``eps = 1/N``.  Its kernel can be built from the exponential incomes,
# or from their Gaussian approximation.  As ``eps`` goes to zero both tend
# to a parabolic equation.

# %%
from __future__ import annotations

import time

from expbandit import (ScaledPrior, scaled_risk, solve_integro_difference_exponential,
                       solve_integro_difference_gaussian, solve_pde)
from expbandit.limit_solver import field_distance

sp = ScaledPrior.symmetric_two_point(1.0)
eps0 = 0.05

# %% [markdown]
# ## Three solvers at two step sizes
#
# The coarse steps keep this demo to about three minutes.  ``eps0`` must lie on
# both time grids.

# %%
for N in (40, 80, 160):
    eps = 1 / N
    spN = sp.with_horizon(N)
    t0 = time.perf_counter()
    exp_f = solve_integro_difference_exponential(spN, eps, t_min=eps0)
    gau_f = solve_integro_difference_gaussian(spN, eps, t_min=eps0)
    pde_f = solve_pde(spN, eps, eps0=eps0)
    # scaled_risk returns the risk itself; dividing by sqrt(D N) gives the scaled value
    risks = [scaled_risk(f, spN, eps0) / spN.scale for f in (exp_f, gau_f, pde_f)]
    print(f"eps=1/{N}: scaled risk exp {risks[0]:.4f}  gauss {risks[1]:.4f}  pde {risks[2]:.4f}"
          f"  ({time.perf_counter() - t0:.1f} s)")
    print(f"          field distance exp/gauss {field_distance(gau_f, exp_f, t_sum_min=0.2):.4f}"
          f"  pde/gauss {field_distance(pde_f, gau_f, t_each_min=eps0):.4f}")

# %% [markdown]
# The Gaussian recursion and the parabolic equation agree closely.  The
# exponential recursion keeps an offset that shrinks slowly with ``eps``,
# because the skewness of the income increments enters at the next order.
