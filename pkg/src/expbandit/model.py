"""Densities, discrete priors and posterior updating for the exponential bandit.

Every prior is a finite set of parameter pairs ``(m1, m2)`` with weights.
Continuous priors have to be discretized by the caller (quadrature nodes).
Likelihoods are handled in log space so that long histories do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp


class DegenerateEvidenceError(ValueError):
    """Raised when every prior node assigns zero likelihood to a history."""


@dataclass(frozen=True)
class Theta:
    """One-step expected incomes of the two arms."""

    m1: float
    m2: float

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0):
            raise ValueError(f"exponential means must be positive, got {self}")

    @property
    def best(self) -> float:
        return max(self.m1, self.m2)


@dataclass(frozen=True)
class BanditState:
    """Sufficient statistic of an observed history."""

    X1: float = 0.0
    n1: int = 0
    X2: float = 0.0
    n2: int = 0

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("pull counts must be nonnegative")
        if self.X1 < 0 or self.X2 < 0:
            raise ValueError("cumulative incomes must be nonnegative")
        if (self.n1 == 0 and self.X1 != 0) or (self.n2 == 0 and self.X2 != 0):
            raise ValueError("an unpulled arm must have zero cumulative income")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def scaled(self, c: float) -> "BanditState":
        return BanditState(c * self.X1, self.n1, c * self.X2, self.n2)


@dataclass(frozen=True, eq=False)
class DiscretePrior:
    """Finite-support prior over ``Theta``.

    Parameters
    ----------
    m1, m2 : array_like
        Support points, one entry per node.
    weights : array_like
        Nonnegative node weights summing to one.
    """

    m1: np.ndarray
    m2: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m1 = np.atleast_1d(np.asarray(self.m1, dtype=float))
        m2 = np.atleast_1d(np.asarray(self.m2, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not (m1.shape == m2.shape == w.shape) or m1.ndim != 1:
            raise ValueError("m1, m2 and weights must be 1-d arrays of equal length")
        if np.any(m1 <= 0) or np.any(m2 <= 0):
            raise ValueError("exponential means must be positive")
        if np.any(w < 0):
            raise ValueError("prior weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"prior weights sum to {w.sum()!r}, not 1")
        if len(set(zip(m1.tolist(), m2.tolist()))) != len(m1):
            raise ValueError("prior support points must be distinct")
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_nodes(cls, nodes: Iterable[tuple[Theta | Sequence[float], float]]) -> "DiscretePrior":
        m1, m2, w = [], [], []
        for theta, weight in nodes:
            if isinstance(theta, Theta):
                a, b = theta.m1, theta.m2
            else:
                a, b = theta
            m1.append(a)
            m2.append(b)
            w.append(weight)
        return cls(np.array(m1), np.array(m2), np.array(w))

    @classmethod
    def point_mass(cls, m1: float, m2: float) -> "DiscretePrior":
        return cls(np.array([m1]), np.array([m2]), np.array([1.0]))

    @classmethod
    def symmetric_two_point(cls, m: float, d: float) -> "DiscretePrior":
        """Equal weights on ``(m+d, m-d)`` and ``(m-d, m+d)``."""
        if not 0 < d < m:
            raise ValueError("need 0 < d < m")
        return cls(np.array([m + d, m - d]), np.array([m - d, m + d]), np.array([0.5, 0.5]))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def nodes(self) -> list[tuple[Theta, float]]:
        return [(Theta(a, b), w) for a, b, w in zip(self.m1, self.m2, self.weights)]

    @property
    def m_max(self) -> float:
        return float(max(self.m1.max(), self.m2.max()))

    @property
    def mean_abs_gap(self) -> float:
        """Prior expectation of ``|m2 - m1|``."""
        return float(np.sum(self.weights * np.abs(self.m2 - self.m1)))

    def scaled(self, c: float) -> "DiscretePrior":
        return DiscretePrior(c * self.m1, c * self.m2, self.weights.copy())

    def swapped(self) -> "DiscretePrior":
        return DiscretePrior(self.m2.copy(), self.m1.copy(), self.weights.copy())


def exp_density(x, m):
    """Exponential density with mean ``m``; zero for negative ``x``."""
    if np.any(np.asarray(m) <= 0):
        raise ValueError("mean must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / m) / m, 0.0)
    return out[()] if out.ndim == 0 else out


def erlang_logpdf(X, n: int, m):
    """Log of the density of a sum of ``n`` exponential incomes with mean ``m``.

    ``n = 0`` encodes the empty history: log-density 0 at ``X = 0``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if np.any(np.asarray(m) <= 0):
        raise ValueError("mean must be positive")
    X = np.asarray(X, dtype=float)
    m = np.asarray(m, dtype=float)
    if n == 0:
        if np.any(X != 0):
            raise ValueError("the empty history (n=0) only admits X=0")
        out = np.zeros(np.broadcast(X, m).shape)
        return out[()] if out.ndim == 0 else out
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.where(X > 0, np.log(np.where(X > 0, X, 1.0)), -np.inf)
        if n == 1:
            logx = np.zeros_like(logx)
        out = (n - 1) * logx - n * np.log(m) - X / m - gammaln(n)
    out = np.where(X >= 0, out, -np.inf)
    return out[()] if out.ndim == 0 else out


def erlang_density(X, n: int, m):
    """Erlang density ``X^(n-1) exp(-X/m) / (m^n (n-1)!)``, equal to 1 for the empty history."""
    out = np.exp(erlang_logpdf(X, n, m))
    return out[()] if np.ndim(out) == 0 else out


def gaussian_density(x, m, D):
    if np.any(np.asarray(D) <= 0):
        raise ValueError("variance must be positive")
    x = np.asarray(x, dtype=float)
    out = np.exp(-((x - m) ** 2) / (2.0 * D)) / np.sqrt(2.0 * np.pi * D)
    return out[()] if out.ndim == 0 else out


def _sufficient_loglik(X, n: int, m):
    # Erlang log-likelihood up to terms that depend on X and n only.
    # Those terms cancel in the posterior, which keeps X = 0 with n >= 2 well posed.
    if n == 0:
        return np.zeros(np.broadcast(np.asarray(X, dtype=float), np.asarray(m)).shape)
    return -n * np.log(m) - np.asarray(X, dtype=float) / m


def log_joint(prior: DiscretePrior, X1, n1: int, X2, n2: int) -> np.ndarray:
    """Per-node ``log(weight * f(X1,n1|m1) * f(X2,n2|m2))``.

    ``X1`` and ``X2`` broadcast against each other; the node axis is prepended.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    shape = np.broadcast(X1, X2).shape
    idx = (slice(None),) + (None,) * len(shape)
    with np.errstate(divide="ignore"):
        lw = np.log(prior.weights)[idx]
    return (lw
            + erlang_logpdf(X1[None, ...], n1, prior.m1[idx])
            + erlang_logpdf(X2[None, ...], n2, prior.m2[idx]))


def posterior_weights(prior: DiscretePrior, X1, n1: int, X2, n2: int) -> np.ndarray:
    """Posterior node weights on a broadcast grid of incomes, node axis first.

    Works for any ``X >= 0`` including ``X = 0`` with ``n >= 2``, where the
    posterior is the ``X -> 0`` limit.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    shape = np.broadcast(X1, X2).shape
    idx = (slice(None),) + (None,) * len(shape)
    with np.errstate(divide="ignore"):
        lw = np.log(prior.weights)[idx]
    ll = (lw
          + _sufficient_loglik(X1[None, ...], n1, prior.m1[idx])
          + _sufficient_loglik(X2[None, ...], n2, prior.m2[idx]))
    ll = np.broadcast_to(ll, (len(prior),) + shape)
    norm = logsumexp(ll, axis=0, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise DegenerateEvidenceError("all prior nodes have zero likelihood")
    return np.exp(ll - norm)


def log_marginal(prior: DiscretePrior, state: BanditState) -> float:
    return float(logsumexp(log_joint(prior, state.X1, state.n1, state.X2, state.n2)))


def marginal(prior: DiscretePrior, state: BanditState) -> float:
    """Prior predictive density of the history ``state``."""
    return math.exp(log_marginal(prior, state))


def marginal_grid(prior: DiscretePrior, X1, n1: int, X2, n2: int) -> np.ndarray:
    """Vectorized ``marginal`` over broadcast income arrays."""
    return np.exp(logsumexp(log_joint(prior, X1, n1, X2, n2), axis=0))


def posterior(prior: DiscretePrior, state: BanditState) -> DiscretePrior:
    lj = log_joint(prior, state.X1, state.n1, state.X2, state.n2)
    norm = logsumexp(lj)
    if not np.isfinite(norm):
        raise DegenerateEvidenceError(
            "history has zero likelihood under every prior node; widen the grid "
            "or check the state")
    w = np.exp(lj - norm)
    w = w / w.sum()
    return DiscretePrior(prior.m1.copy(), prior.m2.copy(), w)
