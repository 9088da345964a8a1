"""Backward induction for the Bayesian risk with posterior re-weighting.

The value function lives on the sufficient statistics ``(X1, n1, X2, n2)``.
For each pair of pull counts the cumulative incomes are discretized on a
uniform grid ``[0, x_max(n)]`` (a single node ``X = 0`` for an unpulled arm),
values between nodes are obtained by linear interpolation, and the
expectation over the next income is taken in closed form: the integral of a
piecewise-linear function against an exponential density has an exact
expression per segment.  A composite Gauss-Legendre rule after the change of
variable ``z = Y / m`` is available as ``quadrature="gauss-legendre"``.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from ._numerics import bilinear, composite_gauss_legendre, weighted_interp_matrix
from .model import BanditState, DiscretePrior, log_joint, marginal_grid, posterior_weights

logger = logging.getLogger(__name__)

#: Tail mass left out of the income integral.
TAIL_MASS = 1e-8
QUAD_PANELS = 8
QUAD_ORDER = 16
DEFAULT_TIE_TOL = 1e-12
_LOG_UNDERFLOW = math.log(1e-300)


class PolicyDecision(enum.IntEnum):
    TIE = 0
    ARM1 = 1
    ARM2 = 2


@dataclass(frozen=True)
class ErlangTruncation:
    """``x_max(n) = n * m_max + k * sqrt(n) * m_max``."""

    m_max: float
    k: float = 12.0

    def __call__(self, n: int) -> float:
        return n * self.m_max + self.k * math.sqrt(n) * self.m_max


@dataclass(frozen=True)
class GridSpec:
    """Income grids: ``nodes_per_axis`` uniform nodes on ``[0, x_max(n)]``."""

    nodes_per_axis: int
    x_max: Callable[[int], float]

    def __post_init__(self):
        if self.nodes_per_axis < 2:
            raise ValueError("need at least two nodes per axis")

    @classmethod
    def for_prior(cls, prior: DiscretePrior, nodes_per_axis: int = 64, k: float = 12.0) -> "GridSpec":
        return cls(nodes_per_axis, ErlangTruncation(prior.m_max, k))

    def axis(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(1)
        return np.linspace(0.0, self.x_max(n), self.nodes_per_axis)

    def halved(self) -> "GridSpec":
        return GridSpec(max(2, self.nodes_per_axis // 2), self.x_max)


@dataclass
class ValueTable:
    """Branch risks ``R1``, ``R2`` per pull-count pair; ``R = min(R1, R2)``."""

    N: int
    grid: GridSpec
    R1: dict = field(default_factory=dict)
    R2: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def axes(self, n1: int, n2: int) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.axis(n1), self.grid.axis(n2)

    def R(self, n1: int, n2: int) -> np.ndarray:
        return np.minimum(self.R1[n1, n2], self.R2[n1, n2])

    def __contains__(self, key) -> bool:
        return key in self.R1

    def slices(self):
        return sorted(self.R1)

    def branch_values(self, n1: int, n2: int, X1, X2) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear interpolation of ``(R1, R2)`` at off-grid incomes."""
        x1, x2 = self.axes(n1, n2)
        return (bilinear(x1, x2, self.R1[n1, n2], X1, X2),
                bilinear(x1, x2, self.R2[n1, n2], X1, X2))


def expectation_matrix(x_from: np.ndarray, x_to: np.ndarray, m: float, q: float,
                       quadrature: str = "exact") -> np.ndarray:
    """Matrix ``P`` with ``(P @ v)[i] ~= E v(x_from[i] + Y)``, ``Y ~ Exp(mean m)``.

    ``v`` is given on ``x_to`` and interpolated linearly, constant beyond the
    last node.  ``"gauss-legendre"`` truncates the integral at ``Y = q`` and
    uses 8 panels of 16 nodes in ``z = Y / m``; ``"exact"`` integrates the
    piecewise-linear interpolant in closed form.
    """
    if quadrature == "exact":
        return _exact_expectation_matrix(x_from, x_to, m)
    if quadrature != "gauss-legendre":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    zmax = q / m
    z, w = composite_gauss_legendre(0.0, zmax, QUAD_PANELS, QUAD_ORDER)
    pts = x_from[:, None] + m * z[None, :]
    wts = np.broadcast_to(w * np.exp(-z), pts.shape)
    return weighted_interp_matrix(x_to, pts, wts)


def _exact_expectation_matrix(x_from: np.ndarray, g: np.ndarray, m: float) -> np.ndarray:
    x = x_from[:, None]
    out = np.zeros((x_from.size, g.size))
    if g.size == 1:
        out[:, 0] = 1.0
        return out
    left, right = g[None, :-1], g[None, 1:]
    a = np.maximum(left, x)
    L = np.maximum(right - a, 0.0)
    Ea = np.exp(-(a - x) / m)
    decay = np.exp(-L / m)
    I0 = -Ea * np.expm1(-L / m)
    # integral of (p - a) against the density over the cell
    J = Ea * (m * (-np.expm1(-L / m)) - L * decay)
    h = right - left
    w_right = ((a - left) * I0 + J) / h
    w_left = I0 - w_right
    out[:, :-1] += w_left
    out[:, 1:] += w_right
    out[:, -1] += np.exp(-np.maximum(g[-1] - x[:, 0], 0.0) / m)
    return out


class _Backup:
    """One Bellman step on a pull-count slice, with per-slice matrix caching."""

    def __init__(self, prior: DiscretePrior, grid: GridSpec, quadrature: str = "exact"):
        self.prior = prior
        self.quadrature = quadrature
        self.grid = grid
        self.q = -math.log(TAIL_MASS) * prior.m_max
        self.gap1 = np.maximum(prior.m2 - prior.m1, 0.0)
        self.gap2 = np.maximum(prior.m1 - prior.m2, 0.0)
        self._cache: dict = {}

    def _P(self, n: int, m: float) -> np.ndarray:
        key = (n, m)
        if key not in self._cache:
            self._cache[key] = expectation_matrix(self.grid.axis(n), self.grid.axis(n + 1), m, self.q,
                                                  self.quadrature)
        return self._cache[key]

    def __call__(self, n1: int, n2: int, next1: np.ndarray | None, next2: np.ndarray | None):
        prior = self.prior
        x1, x2 = self.grid.axis(n1), self.grid.axis(n2)
        W = posterior_weights(prior, x1[:, None], n1, x2[None, :], n2)
        R1 = np.tensordot(self.gap1, W, axes=1)
        R2 = np.tensordot(self.gap2, W, axes=1)
        if next1 is not None:
            cont = {m: self._P(n1, m) @ next1 for m in np.unique(prior.m1)}
            for k, m in enumerate(prior.m1):
                R1 = R1 + W[k] * cont[m]
        if next2 is not None:
            cont = {m: next2 @ self._P(n2, m).T for m in np.unique(prior.m2)}
            for k, m in enumerate(prior.m2):
                R2 = R2 + W[k] * cont[m]
        return R1, R2


def _underflow_check(prior, grid, n1, n2, table_warnings):
    x1, x2 = grid.axis(n1), grid.axis(n2)
    lm = np.logaddexp.reduce(log_joint(prior, x1[:, None], n1, x2[None, :], n2), axis=0)
    interior = lm[1:-1, 1:-1] if lm.shape[0] > 2 and lm.shape[1] > 2 else lm
    frac = float(np.mean(interior < _LOG_UNDERFLOW)) if interior.size else 0.0
    if frac > 0.5:
        msg = f"slice ({n1},{n2}): marginal underflows on {frac:.0%} of interior nodes; grid too coarse or too wide"
        table_warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def backward_solve(prior: DiscretePrior, N: int, grid: GridSpec, lo1: int = 0, lo2: int = 0,
                   quadrature: str = "exact") -> ValueTable:
    """Fill every slice with ``lo1 <= n1``, ``lo2 <= n2``, ``n1 + n2 <= N``."""
    if N < 1:
        raise ValueError("horizon N must be positive")
    table = ValueTable(N=N, grid=grid)
    backup = _Backup(prior, grid, quadrature)
    for s in range(N, lo1 + lo2 - 1, -1):
        for n1 in range(lo1, s - lo2 + 1):
            n2 = s - n1
            shape = (grid.axis(n1).size, grid.axis(n2).size)
            if s == N:
                table.R1[n1, n2] = np.zeros(shape)
                table.R2[n1, n2] = np.zeros(shape)
                continue
            R1, R2 = backup(n1, n2, table.R(n1 + 1, n2), table.R(n1, n2 + 1))
            table.R1[n1, n2] = R1
            table.R2[n1, n2] = R2
            if n1 > 0 and n2 > 0:
                _underflow_check(prior, grid, n1, n2, table.warnings)
    return table


def bellman_backup_exact(prior: DiscretePrior, state: BanditState, table: ValueTable,
                         quadrature: str = "exact") -> tuple[float, float]:
    """Branch risks ``(R1, R2)`` at an arbitrary state from completed next slices.

    ``table`` must contain the slices ``(n1+1, n2)`` and ``(n1, n2+1)``; when
    ``n1 + n2 == N - 1`` those are the terminal zero slices.
    """
    n1, n2 = state.n1, state.n2
    if n1 + n2 >= table.N:
        raise ValueError("state is at or beyond the horizon")
    grid = table.grid
    q = -math.log(TAIL_MASS) * prior.m_max
    W = posterior_weights(prior, np.array([state.X1]), n1, np.array([state.X2]), n2)[:, 0]
    gap1 = np.maximum(prior.m2 - prior.m1, 0.0)
    gap2 = np.maximum(prior.m1 - prior.m2, 0.0)
    nxt1 = table.R(n1 + 1, n2)
    nxt2 = table.R(n1, n2 + 1)
    x1n, x2 = grid.axis(n1 + 1), grid.axis(n2)
    x1, x2n = grid.axis(n1), grid.axis(n2 + 1)
    r1 = r2 = 0.0
    for k in range(len(prior)):
        P1 = expectation_matrix(np.array([state.X1]), x1n, prior.m1[k], q, quadrature)
        c1 = float(bilinear(np.zeros(1), x2, P1 @ nxt1, 0.0, state.X2))
        P2 = expectation_matrix(np.array([state.X2]), x2n, prior.m2[k], q, quadrature)
        c2 = float(bilinear(x1, np.zeros(1), nxt2 @ P2.T, state.X1, 0.0))
        r1 += W[k] * (gap1[k] + c1)
        r2 += W[k] * (gap2[k] + c2)
    return r1, r2


def solve_exact(prior: DiscretePrior, N: int, grid: GridSpec | None = None,
                quadrature: str = "exact") -> tuple[ValueTable, float]:
    """Bayesian risk ``R(0,0,0,0)`` and the full value table."""
    grid = grid or GridSpec.for_prior(prior)
    table = backward_solve(prior, N, grid, quadrature=quadrature)
    return table, float(table.R(0, 0)[0, 0])


def _slice_integral(x1: np.ndarray, x2: np.ndarray, values: np.ndarray) -> float:
    return float(simpson(simpson(values, x=x2, axis=1), x=x1))


def risk_with_forced_start(prior: DiscretePrior, N: int, n0: int, grid: GridSpec | None = None,
                           table: ValueTable | None = None, quadrature: str = "exact") -> float:
    """Risk of pulling each arm ``n0`` times first and then playing optimally."""
    if n0 < 1 or 2 * n0 >= N:
        raise ValueError("forced start needs n0 >= 1 and 2*n0 < N")
    grid = grid or (table.grid if table is not None else GridSpec.for_prior(prior))
    if table is None or (n0, n0) not in table:
        table = backward_solve(prior, N, grid, lo1=n0, lo2=n0, quadrature=quadrature)
    x1, x2 = table.axes(n0, n0)
    mu = marginal_grid(prior, x1[:, None], n0, x2[None, :], n0)
    return n0 * prior.mean_abs_gap + _slice_integral(x1, x2, table.R(n0, n0) * mu)


def extract_policy(table: ValueTable, state: BanditState, tie_tol: float = DEFAULT_TIE_TOL) -> PolicyDecision:
    """Bayesian decision at ``state``: the branch with the smaller risk."""
    if state.n1 + state.n2 >= table.N:
        raise ValueError("no decision at or beyond the horizon")
    if (state.n1, state.n2) not in table:
        raise ValueError(f"slice ({state.n1}, {state.n2}) is not in the table")
    r1, r2 = table.branch_values(state.n1, state.n2, state.X1, state.X2)
    return decide(r1, r2, tie_tol)


def decide(r1, r2, tie_tol: float = DEFAULT_TIE_TOL):
    """Vectorized decision rule; returns a ``PolicyDecision`` for scalar input."""
    r1 = np.asarray(r1)
    r2 = np.asarray(r2)
    out = np.where(r1 < r2 - tie_tol, PolicyDecision.ARM1,
                   np.where(r2 < r1 - tie_tol, PolicyDecision.ARM2, PolicyDecision.TIE))
    if out.ndim == 0:
        return PolicyDecision(int(out))
    return out
