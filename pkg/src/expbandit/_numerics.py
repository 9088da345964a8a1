"""Quadrature rules and interpolation operators shared by the solvers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline


@lru_cache(maxsize=None)
def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def composite_gauss_legendre(a: float, b: float, panels: int = 8, order: int = 16):
    """Nodes and weights of a composite Gauss-Legendre rule on ``[a, b]``."""
    x, w = _gl(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def linear_interp_matrix(grid: np.ndarray, points: np.ndarray, extrapolate: str = "constant") -> np.ndarray:
    """Dense matrix ``M`` with ``M @ values == np.interp(points, grid, values)``.

    ``extrapolate`` is ``"constant"`` (clamp to the end values) or ``"zero"``.
    A single-node grid maps every point onto that node.
    """
    grid = np.asarray(grid, dtype=float)
    points = np.asarray(points, dtype=float)
    M = np.zeros((points.size, grid.size))
    if grid.size == 1:
        M[:, 0] = 1.0
        return M
    rows = np.arange(points.size)
    inside = (points >= grid[0]) & (points <= grid[-1])
    p = np.clip(points, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, p, side="right") - 1, 0, grid.size - 2)
    lam = (p - grid[j]) / (grid[j + 1] - grid[j])
    M[rows, j] = 1.0 - lam
    M[rows, j + 1] += lam
    if extrapolate == "zero":
        M[~inside] = 0.0
    elif extrapolate != "constant":
        raise ValueError(f"unknown extrapolation {extrapolate!r}")
    return M


def weighted_interp_matrix(grid, points, weights, extrapolate="constant") -> np.ndarray:
    """``sum_q weights[i, q] * interp(points[i, q])`` as a matrix acting on grid values.

    ``points`` and ``weights`` have shape ``(n_rows, n_quad)``; the result is
    ``(n_rows, len(grid))``.
    """
    grid = np.asarray(grid, dtype=float)
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_rows, n_q = points.shape
    out = np.zeros((n_rows, grid.size))
    if grid.size == 1:
        out[:, 0] = weights.sum(axis=1)
        return out
    p = np.clip(points, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, p, side="right") - 1, 0, grid.size - 2)
    lam = (p - grid[j]) / (grid[j + 1] - grid[j])
    w = weights
    if extrapolate == "zero":
        w = np.where((points >= grid[0]) & (points <= grid[-1]), weights, 0.0)
    elif extrapolate != "constant":
        raise ValueError(f"unknown extrapolation {extrapolate!r}")
    rows = np.broadcast_to(np.arange(n_rows)[:, None], points.shape)
    np.add.at(out, (rows, j), w * (1.0 - lam))
    np.add.at(out, (rows, j + 1), w * lam)
    return out


def cubic_interp_matrix(grid: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Cubic-spline interpolation as a matrix, constant beyond the grid ends."""
    grid = np.asarray(grid, dtype=float)
    p = np.clip(np.asarray(points, dtype=float), grid[0], grid[-1])
    spline = CubicSpline(grid, np.eye(grid.size), axis=0)
    return spline(p.ravel()).reshape(p.shape + (grid.size,))


def bilinear(x_grid, y_grid, table, x, y) -> np.ndarray:
    """Bilinear interpolation of ``table`` (shape ``(len(x_grid), len(y_grid))``)
    at scattered points, clamped to the grid box."""
    x_grid = np.asarray(x_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def weights(grid, p):
        if grid.size == 1:
            z = np.zeros(p.shape, dtype=int)
            return z, z, np.zeros(p.shape)
        q = np.clip(p, grid[0], grid[-1])
        j = np.clip(np.searchsorted(grid, q, side="right") - 1, 0, grid.size - 2)
        return j, j + 1, (q - grid[j]) / (grid[j + 1] - grid[j])

    i0, i1, a = weights(x_grid, x)
    j0, j1, b = weights(y_grid, y)
    return ((1 - a) * (1 - b) * table[i0, j0] + a * (1 - b) * table[i1, j0]
            + (1 - a) * b * table[i0, j1] + a * b * table[i1, j1])


def cubic_weighted_matrix(grid: np.ndarray, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_q weights[i, q] * spline(points[i, q])`` as a matrix acting on grid values.

    The spline is the not-a-knot cubic interpolant, held constant beyond the
    grid ends.  Weights are first reduced to per-segment power moments, so the
    cost does not grow with ``n_rows * n_quad * len(grid)``.
    """
    grid = np.asarray(grid, dtype=float)
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_rows = points.shape[0]
    coef = CubicSpline(grid, np.eye(grid.size), axis=0).c  # (4, n_seg, n_grid)
    n_seg = coef.shape[1]
    p = np.clip(points, grid[0], grid[-1])
    seg = np.clip(np.searchsorted(grid, p, side="right") - 1, 0, n_seg - 1)
    dp = p - grid[seg]
    rows = np.broadcast_to(np.arange(n_rows)[:, None], points.shape)
    moments = np.zeros((n_rows, 4, n_seg))
    power = np.ones_like(dp)
    for k in range(3, -1, -1):
        # coef[k] multiplies dp ** (3 - k)
        np.add.at(moments[:, k, :], (rows, seg), weights * power)
        power = power * dp
    return np.einsum("iks,ksj->ij", moments, coef)
