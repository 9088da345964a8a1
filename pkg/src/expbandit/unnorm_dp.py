"""Backward induction for the unnormalized risk ``tR = R * marginal``.

No posterior is ever normalized here: the one-step expectation becomes an
integral against the predictive transition kernel
``n X^(n-1) / (X + Y)^n``, and the immediate losses enter through the
G-functions.  The result must coincide with :mod:`expbandit.exact_dp`
multiplied by the marginal of the history, which is what the cross-checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from ._numerics import composite_gauss_legendre, weighted_interp_matrix
from .exact_dp import QUAD_ORDER, QUAD_PANELS, GridSpec, _slice_integral, _underflow_check
from .model import BanditState, DiscretePrior, erlang_logpdf, log_joint

#: Slices whose maximum falls below this are rescaled and the exponent kept.
RESCALE_BELOW = 1e-250


@dataclass
class UnnormValueTable:
    """Stored values are ``T * exp(log_scale[n1, n2])``."""

    N: int
    grid: GridSpec
    T1: dict = field(default_factory=dict)
    T2: dict = field(default_factory=dict)
    log_scale: dict = field(default_factory=dict)
    ratio: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def axes(self, n1: int, n2: int):
        return self.grid.axis(n1), self.grid.axis(n2)

    def __contains__(self, key) -> bool:
        return key in self.T1

    def slices(self):
        return sorted(self.T1)

    def scaled_tR(self, n1: int, n2: int) -> np.ndarray:
        return np.minimum(self.T1[n1, n2], self.T2[n1, n2])

    def tR(self, n1: int, n2: int) -> np.ndarray:
        return self.scaled_tR(n1, n2) * math.exp(self.log_scale[n1, n2])

    def branches(self, n1: int, n2: int) -> tuple[np.ndarray, np.ndarray]:
        c = math.exp(self.log_scale[n1, n2])
        return self.T1[n1, n2] * c, self.T2[n1, n2] * c


def g_functions(prior: DiscretePrior, state: BanditState) -> tuple[float, float]:
    """Prior-and-likelihood weighted immediate losses of the two actions."""
    G1, G2 = g_grid(prior, np.asarray(state.X1), state.n1, np.asarray(state.X2), state.n2)
    return float(G1), float(G2)


def _log_g(prior, X1, n1, X2, n2):
    lj = log_joint(prior, X1, n1, X2, n2)
    idx = (slice(None),) + (None,) * (lj.ndim - 1)
    gap1 = np.maximum(prior.m2 - prior.m1, 0.0)[idx]
    gap2 = np.maximum(prior.m1 - prior.m2, 0.0)[idx]
    lj1 = np.where(gap1 > 0, lj, -np.inf)
    lj2 = np.where(gap2 > 0, lj, -np.inf)
    with np.errstate(divide="ignore"):
        lg1 = logsumexp(lj1, axis=0, b=np.where(gap1 > 0, gap1, 1.0) * np.ones_like(lj))
        lg2 = logsumexp(lj2, axis=0, b=np.where(gap2 > 0, gap2, 1.0) * np.ones_like(lj))
    return lg1, lg2


def g_grid(prior: DiscretePrior, X1, n1: int, X2, n2: int):
    lg1, lg2 = _log_g(prior, X1, n1, X2, n2)
    return np.exp(lg1), np.exp(lg2)


def transition_kernel(X, n: int, Y):
    """Predictive density factor ``n X^(n-1) / (X + Y)^n`` of the next total ``X + Y``."""
    if n < 1:
        raise ValueError("the transition kernel needs n >= 1")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if np.any(X < 0):
        raise ValueError("cumulative income must be nonnegative")
    if np.any(X == 0) and n == 1:
        raise ValueError("kernel 1/Y at X=0, n=1 is not integrable against bounded functions")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(X > 0, (n / np.where(X > 0, X, 1.0)) * (X / (X + Y)) ** n, 0.0)
    out = np.where(Y >= 0, out, 0.0)
    return out[()] if out.ndim == 0 else out


def kernel_scale(X: float, n: int, m_floor: float) -> float:
    """Length scale of the mapped heavy-tail rule ``Y = s u / (1 - u)``."""
    if n == 0:
        return m_floor
    return max(X / n, m_floor)


def kernel_quadrature(X: float, n: int, scale: float, panels: int = QUAD_PANELS, order: int = QUAD_ORDER):
    """Nodes ``Y`` and weights (kernel included) on ``[0, inf)``.

    ``n = 0`` gives the unit kernel of a first pull.
    """
    u, w = composite_gauss_legendre(0.0, 1.0, panels, order)
    Y = scale * u / (1.0 - u)
    jac = scale / (1.0 - u) ** 2
    k = np.ones_like(Y) if n == 0 else transition_kernel(X, n, Y)
    return Y, w * jac * k


def _exact_kernel_matrix(x_from: np.ndarray, n: int, g: np.ndarray) -> np.ndarray:
    # closed-form integrals of the hat functions on g against the kernel, zero beyond g[-1]
    out = np.zeros((x_from.size, g.size))
    left, right = g[:-1], g[1:]
    h = right - left
    for i, X in enumerate(x_from):
        a = np.maximum(left, X)
        b = right
        live = b > a
        if not np.any(live):
            continue
        a, b, lo, hh = a[live], b[live], left[live], h[live]
        if n == 0:
            I0 = b - a
            I1 = 0.5 * (b * b - a * a)
        elif X == 0:
            if n == 1:
                # tR vanishes at X = 0 for n + 1 >= 2; only cells away from zero count
                pos = a > 0
                I0 = np.where(pos, np.log(np.where(pos, b / np.where(pos, a, 1.0), 1.0)), 0.0)
                I1 = b - a
                # first cell: hat_1 * (1/p) integrates to 1 over [0, h]
                first = ~pos
                I0 = np.where(first, 0.0, I0)
                I1 = np.where(first, b - a, I1)
            else:
                continue
        else:
            ra, rb = X / a, X / b
            if n == 1:
                I0 = np.log(b / a)
                I1 = b - a
            else:
                I0 = n / (n - 1) * (ra ** (n - 1) - rb ** (n - 1))
                if n == 2:
                    I1 = 2.0 * X * np.log(b / a)
                else:
                    I1 = n * X / (n - 2) * (ra ** (n - 2) - rb ** (n - 2))
        J = I1 - a * I0
        w_right = ((a - lo) * I0 + J) / hh
        w_left = I0 - w_right
        idx = np.flatnonzero(live)
        np.add.at(out[i], idx, w_left)
        np.add.at(out[i], idx + 1, w_right)
        if X == 0 and n == 1:
            out[i, 0] = 0.0
    return out


def kernel_matrix(x_from: np.ndarray, n: int, x_to: np.ndarray, m_floor: float,
                  quadrature: str = "exact") -> np.ndarray:
    """Matrix ``K`` with ``(K @ v)[i] ~= int v(x_from[i] + Y) k(x_from[i], n, Y) dY``.

    ``v`` lives on ``x_to``, is interpolated linearly and taken as zero beyond
    the last node (the unnormalized risk vanishes at large incomes).
    """
    if quadrature == "exact":
        return _exact_kernel_matrix(x_from, n, x_to)
    if quadrature != "gauss-legendre":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    rows_pts, rows_w = [], []
    for X in x_from:
        if n >= 2 and X == 0:
            Y, w = np.zeros(QUAD_PANELS * QUAD_ORDER), np.zeros(QUAD_PANELS * QUAD_ORDER)
        elif n == 1 and X == 0:
            # 1/Y against a function vanishing linearly at 0; use X = tiny limit
            s = kernel_scale(0.0, 1, m_floor)
            u, w = composite_gauss_legendre(0.0, 1.0, QUAD_PANELS, QUAD_ORDER)
            Y = s * u / (1.0 - u)
            w = w * s / (1.0 - u) ** 2 / Y
        else:
            Y, w = kernel_quadrature(X, n, kernel_scale(X, n, m_floor))
        rows_pts.append(X + Y)
        rows_w.append(w)
    return weighted_interp_matrix(x_to, np.array(rows_pts), np.array(rows_w), extrapolate="zero")


def log_leading_power(X, n: int):
    """``log(X^(n-1) / (n-1)!)``, the income factor shared by every Erlang density.

    ``tR`` divided by this factor in both coordinates stays finite and positive
    at ``X = 0``, where ``tR`` itself vanishes for ``n >= 2``.
    """
    X = np.asarray(X, dtype=float)
    if n <= 1:
        return np.zeros_like(X)
    with np.errstate(divide="ignore"):
        return (n - 1) * np.log(X) - gammaln(n)


def _log_reduced_density(X, n: int, m):
    # Erlang log-density minus log_leading_power: -n log m - X/m
    return -n * np.log(m) - np.asarray(X, dtype=float) / m


class _UnnormBackup:
    def __init__(self, prior: DiscretePrior, grid: GridSpec, quadrature: str, interpolation: str):
        if interpolation not in ("envelope", "linear"):
            raise ValueError(f"unknown interpolation {interpolation!r}")
        if quadrature not in ("exact", "gauss-legendre"):
            raise ValueError(f"unknown quadrature {quadrature!r}")
        self.prior = prior
        self.grid = grid
        self.quadrature = quadrature
        self.interpolation = interpolation
        self.m_floor = 0.5 * float(min(prior.m1.min(), prior.m2.min()))
        self._cache: dict = {}

    def K(self, n: int) -> np.ndarray:
        key = ("K", n)
        if key not in self._cache:
            self._cache[key] = kernel_matrix(self.grid.axis(n), n, self.grid.axis(n + 1), self.m_floor,
                                             self.quadrature)
        return self._cache[key]

    def M(self, n: int, m: float) -> np.ndarray:
        """Kernel times next-step likelihood under mean ``m``, in reduced units.

        Row ``i`` integrates ``k(X_i, n, Y) f(X_i + Y, n+1 | m)`` against the
        hat functions of the next grid and divides by the leading power at
        ``X_i``.  At ``X_i = 0`` (``n >= 1``) the row is the limit of that
        quotient, ``m^-(n+1) exp(-Y/m)``.
        """
        key = ("M", n, m)
        if key in self._cache:
            return self._cache[key]
        x_from, x_to = self.grid.axis(n), self.grid.axis(n + 1)
        pts, wts = [], []
        for X in x_from:
            Y, w = kernel_quadrature(X, 0, kernel_scale(X, n, self.m_floor))
            if n == 0:
                lw = erlang_logpdf(Y, 1, m)
            elif X == 0:
                lw = _log_reduced_density(Y, n + 1, m)
            else:
                logk = np.log(transition_kernel(X, n, Y))
                lw = logk + erlang_logpdf(X + Y, n + 1, m) - log_leading_power(X, n)
            pts.append(X + Y)
            wts.append(w * np.exp(lw))
        M = weighted_interp_matrix(x_to, np.array(pts), np.array(wts), extrapolate="constant")
        self._cache[key] = M
        return M

    def linear_step(self, table, n1: int, n2: int):
        """Plain linear interpolation of ``tR`` itself."""
        prior = self.prior
        x1, x2 = self.grid.axis(n1), self.grid.axis(n2)
        ls = max(table.log_scale[n1 + 1, n2], table.log_scale[n1, n2 + 1])
        lg1, lg2 = _log_g(prior, x1[:, None], n1, x2[None, :], n2)
        c1 = self.K(n1) @ table.scaled_tR(n1 + 1, n2) * math.exp(table.log_scale[n1 + 1, n2] - ls)
        c2 = table.scaled_tR(n1, n2 + 1) @ self.K(n2).T * math.exp(table.log_scale[n1, n2 + 1] - ls)
        T1 = np.exp(lg1 - ls) + c1
        T2 = np.exp(lg2 - ls) + c2
        peak = max(T1.max(), T2.max())
        if 0 < peak < RESCALE_BELOW:
            T1, T2, ls = T1 / peak, T2 / peak, ls + math.log(peak)
        return T1, T2, ls

    def envelope_step(self, table, n1: int, n2: int):
        """Interpolate ``tR / marginal`` and work with leading powers divided out."""
        prior = self.prior
        x1, x2 = self.grid.axis(n1), self.grid.axis(n2)
        with np.errstate(divide="ignore"):
            lw = np.log(prior.weights)
        lf1 = _log_reduced_density(x1[None, :], n1, prior.m1[:, None]) + lw[:, None]
        lf2 = _log_reduced_density(x2[None, :], n2, prior.m2[:, None])
        # common shift keeps the largest reduced marginal at order one
        shift = float(np.max(lf1[:, :, None] + lf2[:, None, :]))
        f1 = np.exp(lf1 - shift)
        f2 = np.exp(lf2)
        mu = np.einsum("ki,kj->ij", f1, f2)
        r1 = table.ratio[n1 + 1, n2]
        r2 = table.ratio[n1, n2 + 1]
        gap1 = np.maximum(prior.m2 - prior.m1, 0.0)
        gap2 = np.maximum(prior.m1 - prior.m2, 0.0)
        T1 = np.einsum("ki,kj,k->ij", f1, f2, gap1)
        T2 = np.einsum("ki,kj,k->ij", f1, f2, gap2)
        for k in range(len(prior)):
            e1 = np.exp(lf1[k] - shift)
            T1 += (self.M(n1, prior.m1[k]) @ r1) * (np.exp(lw[k]) * f2[k])[None, :] * np.exp(-shift)
            T2 += (r2 @ self.M(n2, prior.m2[k]).T) * e1[:, None]
        ratio = np.minimum(T1, T2) / np.where(mu > 0, mu, np.inf)
        lead = log_leading_power(x1, n1)[:, None] + log_leading_power(x2, n2)[None, :]
        finite = np.isfinite(lead)
        ls = shift + float(lead[finite].max())
        factor = np.where(finite, np.exp(np.where(finite, lead, 0.0) + shift - ls), 0.0)
        return T1 * factor, T2 * factor, ls, ratio


def backward_solve_unnorm(prior: DiscretePrior, N: int, grid: GridSpec, lo1: int = 0, lo2: int = 0,
                          quadrature: str = "exact", interpolation: str = "envelope") -> UnnormValueTable:
    """Fill every slice with ``lo1 <= n1``, ``lo2 <= n2``, ``n1 + n2 <= N``.

    Parameters
    ----------
    interpolation : {"envelope", "linear"}
        ``"envelope"`` interpolates ``tR / marginal`` linearly and restores the
        marginal inside a mapped Gauss-Legendre rule on the kernel;
        ``"linear"`` interpolates ``tR`` itself, which needs far finer grids
        near ``X = 0`` where the marginal is steep.
    quadrature : {"exact", "gauss-legendre"}
        Only used with ``interpolation="linear"``.
    """
    if N < 1:
        raise ValueError("horizon N must be positive")
    table = UnnormValueTable(N=N, grid=grid)
    bk = _UnnormBackup(prior, grid, quadrature, interpolation)
    for s in range(N, lo1 + lo2 - 1, -1):
        for n1 in range(lo1, s - lo2 + 1):
            n2 = s - n1
            x1, x2 = grid.axis(n1), grid.axis(n2)
            if s == N:
                table.T1[n1, n2] = np.zeros((x1.size, x2.size))
                table.T2[n1, n2] = np.zeros((x1.size, x2.size))
                table.ratio[n1, n2] = np.zeros((x1.size, x2.size))
                table.log_scale[n1, n2] = 0.0
                continue
            if interpolation == "linear":
                T1, T2, ls = bk.linear_step(table, n1, n2)
            else:
                T1, T2, ls, table.ratio[n1, n2] = bk.envelope_step(table, n1, n2)
            table.T1[n1, n2] = T1
            table.T2[n1, n2] = T2
            table.log_scale[n1, n2] = ls
            if n1 > 0 and n2 > 0:
                _underflow_check(prior, grid, n1, n2, table.warnings)
    return table


def solve_unnorm(prior: DiscretePrior, N: int, grid: GridSpec | None = None,
                 quadrature: str = "exact", interpolation: str = "envelope") -> tuple[UnnormValueTable, float]:
    """Bayesian risk ``tR(0,0,0,0)`` via the unnormalized recursion."""
    grid = grid or GridSpec.for_prior(prior)
    table = backward_solve_unnorm(prior, N, grid, quadrature=quadrature, interpolation=interpolation)
    return table, float(table.tR(0, 0)[0, 0])


def risk_unnorm_forced_start(prior: DiscretePrior, N: int, n0: int, grid: GridSpec | None = None,
                             table: UnnormValueTable | None = None, quadrature: str = "exact",
                             interpolation: str = "envelope") -> float:
    if n0 < 1 or 2 * n0 >= N:
        raise ValueError("forced start needs n0 >= 1 and 2*n0 < N")
    grid = grid or (table.grid if table is not None else GridSpec.for_prior(prior))
    if table is None or (n0, n0) not in table:
        table = backward_solve_unnorm(prior, N, grid, lo1=n0, lo2=n0, quadrature=quadrature,
                                      interpolation=interpolation)
    x1, x2 = table.axes(n0, n0)
    return n0 * prior.mean_abs_gap + _slice_integral(x1, x2, table.tR(n0, n0))
