"""Monte Carlo play of bandit strategies and regret estimation.

Every replication owns a fixed block of a Philox counter stream keyed by the
seed, so results do not depend on how replications are chunked or spread
over threads.  A replication's block holds one uniform for drawing
``theta`` from the prior followed by three uniforms per step: the income,
the exploration coin and the exploration arm.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exact_dp import DEFAULT_TIE_TOL, PolicyDecision, ValueTable, decide
from .model import BanditState, DiscretePrior, Theta, posterior_weights

logger = logging.getLogger(__name__)

CHUNK = 8192


class Policy:
    """Decision rule on sufficient statistics.

    Subclasses implement :meth:`decide_many`, which handles a batch of
    episodes sharing the pull counts ``(n1, n2)``.  ``u`` holds each episode's
    two exploration uniforms for this step.
    """

    name = "policy"

    def decide_many(self, n1: int, n2: int, X1: np.ndarray, X2: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, state: BanditState, u=(1.0, 0.0)) -> PolicyDecision:
        d = self.decide_many(state.n1, state.n2, np.array([state.X1]), np.array([state.X2]),
                             np.asarray(u, dtype=float).reshape(1, 2))
        return PolicyDecision(int(d[0]))


class AlwaysArm(Policy):
    def __init__(self, arm: int):
        if arm not in (1, 2):
            raise ValueError("arm must be 1 or 2")
        self.arm = arm
        self.name = f"always{arm}"

    def decide_many(self, n1, n2, X1, X2, u):
        return np.full(X1.shape, self.arm, dtype=int)


class DPPolicy(Policy):
    """Bayesian decisions read off a solved value table (bilinear off the grid)."""

    name = "dp"

    def __init__(self, table: ValueTable, tie_tol: float = DEFAULT_TIE_TOL):
        self.table = table
        self.tie_tol = tie_tol

    def decide_many(self, n1, n2, X1, X2, u):
        if n1 + n2 >= self.table.N:
            raise ValueError("no decision at or beyond the horizon")
        if (n1, n2) not in self.table:
            raise ValueError(f"slice ({n1}, {n2}) is not in the value table")
        r1, r2 = self.table.branch_values(n1, n2, X1, X2)
        return np.asarray(decide(r1, r2, self.tie_tol), dtype=int)


class ForcedStartThenDP(DPPolicy):
    """Pull each arm ``n0`` times (the less-pulled arm first), then follow the table."""

    def __init__(self, table: ValueTable, n0: int, tie_tol: float = DEFAULT_TIE_TOL):
        super().__init__(table, tie_tol)
        if n0 < 1:
            raise ValueError("n0 must be positive")
        self.n0 = n0
        self.name = f"forced{n0}+dp"

    def decide_many(self, n1, n2, X1, X2, u):
        if n1 < self.n0 or n2 < self.n0:
            return np.full(X1.shape, 1 if n1 <= n2 else 2, dtype=int)
        return super().decide_many(n1, n2, X1, X2, u)


class Greedy(Policy):
    """Arm with the larger posterior mean."""

    name = "greedy"

    def __init__(self, prior: DiscretePrior, tie_tol: float = DEFAULT_TIE_TOL):
        self.prior = prior
        self.tie_tol = tie_tol

    def decide_many(self, n1, n2, X1, X2, u):
        w = posterior_weights(self.prior, X1, n1, X2, n2)
        mean1 = self.prior.m1 @ w
        mean2 = self.prior.m2 @ w
        # larger mean is better: pass negated means as "risks"
        return np.asarray(decide(-mean1, -mean2, self.tie_tol), dtype=int)


class EpsilonGreedy(Greedy):
    """Greedy, except that with probability ``p`` a uniformly random arm is pulled."""

    def __init__(self, prior: DiscretePrior, p: float, tie_tol: float = DEFAULT_TIE_TOL):
        super().__init__(prior, tie_tol)
        if not 0 <= p <= 1:
            raise ValueError("exploration probability must lie in [0, 1]")
        self.p = p
        self.name = f"eps-greedy({p:g})"

    def decide_many(self, n1, n2, X1, X2, u):
        d = super().decide_many(n1, n2, X1, X2, u)
        explore = u[:, 0] < self.p
        return np.where(explore, np.where(u[:, 1] < 0.5, 1, 2), d)


@dataclass(frozen=True)
class RegretEstimate:
    mean: float
    std_error: float
    replications: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "RegretEstimate":
        n = samples.size
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error


def row_width(N: int) -> int:
    """Uniforms per replication, padded to whole Philox counter blocks."""
    return 4 * int(math.ceil((1 + 3 * N) / 4))


def replication_uniforms(seed: int, start: int, count: int, N: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of the seed's uniform table."""
    width = row_width(N)
    bg = np.random.Philox(key=int(seed) % (1 << 128))
    bg.advance(start * (width // 4))
    return np.random.Generator(bg).random(count * width).reshape(count, width)


def _play(policy: Policy, m1: np.ndarray, m2: np.ndarray, N: int, U: np.ndarray,
          tie_arm: int) -> np.ndarray:
    reps = m1.size
    n1 = np.zeros(reps, dtype=int)
    X1 = np.zeros(reps)
    X2 = np.zeros(reps)
    total = np.zeros(reps)
    for step in range(N):
        u_inc = U[:, 1 + 3 * step]
        u_exp = U[:, 2 + 3 * step: 4 + 3 * step]
        n2 = step - n1
        arm = np.empty(reps, dtype=int)
        for k in np.unique(n1):
            idx = np.flatnonzero(n1 == k)
            arm[idx] = policy.decide_many(int(k), step - int(k), X1[idx], X2[idx], u_exp[idx])
        arm = np.where(arm == PolicyDecision.TIE, tie_arm, arm)
        mean = np.where(arm == 1, m1, m2)
        xi = -mean * np.log1p(-u_inc)
        total += xi
        one = arm == 1
        X1 = np.where(one, X1 + xi, X1)
        X2 = np.where(one, X2, X2 + xi)
        n1 = n1 + one
        del n2
    return N * np.maximum(m1, m2) - total


def _run(policy: Policy, draw_theta, N: int, seed: int, replications: int, threads: int | None,
         tie_arm: int) -> np.ndarray:
    if replications < 1:
        raise ValueError("replications must be positive")
    if N < 1:
        raise ValueError("N must be positive")
    if tie_arm not in (1, 2):
        raise ValueError("ties resolve to arm 1 or 2")
    starts = list(range(0, replications, CHUNK))

    def chunk(start):
        count = min(CHUNK, replications - start)
        U = replication_uniforms(seed, start, count, N)
        m1, m2 = draw_theta(U[:, 0])
        return _play(policy, m1, m2, N, U, tie_arm)

    if threads is not None and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    return np.concatenate(parts)


def simulate_strategy(policy: Policy, theta: Theta, N: int, seed: int, replications: int, *,
                      threads: int | None = None, tie_arm: int = 1) -> RegretEstimate:
    """Regret ``N max(m1, m2) - sum of incomes`` of ``policy`` at a fixed ``theta``."""

    def draw(u):
        return np.full(u.size, theta.m1), np.full(u.size, theta.m2)

    return RegretEstimate.from_samples(_run(policy, draw, N, seed, replications, threads, tie_arm))


def regret_samples(policy: Policy, prior: DiscretePrior, N: int, seed: int, replications: int, *,
                   threads: int | None = None, tie_arm: int = 1) -> np.ndarray:
    """Per-episode regrets with ``theta`` drawn from the prior (in replication order)."""
    cum = np.cumsum(prior.weights)

    def draw(u):
        idx = np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1)
        return prior.m1[idx], prior.m2[idx]

    return _run(policy, draw, N, seed, replications, threads, tie_arm)


def bayes_regret_mc(policy: Policy, prior: DiscretePrior, N: int, seed: int, replications: int, *,
                    threads: int | None = None, tie_arm: int = 1) -> RegretEstimate:
    """Unbiased Monte Carlo estimate of the prior-averaged regret of ``policy``."""
    samples = regret_samples(policy, prior, N, seed, replications, threads=threads, tie_arm=tie_arm)
    return RegretEstimate.from_samples(samples)
