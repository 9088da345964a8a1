"""Scaled "close distributions" regime: integro-difference equations and their PDE limit.

When both means sit within ``O(N^-1/2)`` of a common value ``m`` the
unnormalized risk, rescaled as ``tR = (D N)^-1/2 tr``, satisfies a recursion in
the scaled variables

    t = n / N,    x = (X - n m) / sqrt(D N),    v = (m_l - m) sqrt(N / D),

with time step ``eps = 1/N`` and income step ``delta = sqrt(eps)``.  This
module solves that recursion for exponential and Gaussian incomes, the
second-order HJB equation obtained as ``eps -> 0``, and evaluates the scaled
risk of a forced-start strategy.

All three solvers share one backward sweep over diagonals ``t1 + t2 = const``;
they differ only in the one-dimensional operator that advances ``t_l`` by one
step along the ``x_l`` axis.  Times below ``t_min`` are never visited: the
``tr / t`` term is singular at ``t = 0`` and the forced start covers that
region anyway.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from ._numerics import cubic_weighted_matrix, weighted_interp_matrix
from .model import BanditState, DiscretePrior, gaussian_density

logger = logging.getLogger(__name__)

#: Default half-width of the scaled income axes.
X_SPAN = 8.0
#: Default first time layer of the sweep (also the default forced-start fraction).
T_MIN = 0.05
#: Smallest admissible ``1 + delta * x_hat`` inside the solvers; see ``exponential_operator``.
A_FLOOR = 1e-3
#: Stored-slice lattice spacing in ``t``.
STORE_DT = 0.05

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True, eq=False)
class ScaledPrior:
    """Prior on the scaled offsets ``v = (m_l - m) sqrt(N / D)``.

    Parameters
    ----------
    v1, v2, weights : array_like
        Support points and weights (summing to one).
    m : float
        Center mean.
    D : float, optional
        One-step variance; defaults to ``m**2``, which is forced when
        ``exponential`` is true.
    N : int
        Horizon the scaling refers to.
    """

    v1: np.ndarray
    v2: np.ndarray
    weights: np.ndarray
    m: float = 1.0
    D: float | None = None
    N: int = 100
    exponential: bool = True

    def __post_init__(self):
        v1 = np.atleast_1d(np.asarray(self.v1, dtype=float))
        v2 = np.atleast_1d(np.asarray(self.v2, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not (v1.shape == v2.shape == w.shape) or v1.ndim != 1:
            raise ValueError("v1, v2 and weights must be 1-d arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.m <= 0:
            raise ValueError("center mean must be positive")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        D = self.m ** 2 if self.D is None else float(self.D)
        if D <= 0:
            raise ValueError("variance must be positive")
        if self.exponential and abs(D - self.m ** 2) > 1e-12 * self.m ** 2:
            raise ValueError("exponential incomes have variance m**2")
        object.__setattr__(self, "v1", v1)
        object.__setattr__(self, "v2", v2)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "D", D)

    @classmethod
    def symmetric_two_point(cls, d: float, m: float = 1.0, N: int = 100) -> "ScaledPrior":
        """Equal weights on ``(d, -d)`` and ``(-d, d)``."""
        return cls(np.array([d, -d]), np.array([-d, d]), np.array([0.5, 0.5]), m=m, N=N)

    @classmethod
    def point_mass(cls, v1: float, v2: float, m: float = 1.0, N: int = 100) -> "ScaledPrior":
        return cls(np.array([v1]), np.array([v2]), np.array([1.0]), m=m, N=N)

    @property
    def mean_abs_gap(self) -> float:
        return float(np.sum(self.weights * np.abs(self.v2 - self.v1)))

    @property
    def scale(self) -> float:
        """``sqrt(D N)``, the factor between scaled and unscaled risk."""
        return math.sqrt(self.D * self.N)

    def with_horizon(self, N: int) -> "ScaledPrior":
        return ScaledPrior(self.v1, self.v2, self.weights, self.m, self.D, N, self.exponential)

    def to_discrete(self) -> DiscretePrior:
        """Unscaled prior ``m_l = m + sqrt(D/N) v_l`` for the exact solvers."""
        c = math.sqrt(self.D / self.N)
        return DiscretePrior(self.m + c * self.v1, self.m + c * self.v2, self.weights.copy())


def scale_state(state: BanditState, sp: ScaledPrior) -> tuple[float, float, float, float]:
    s = sp.scale
    return ((state.X1 - state.n1 * sp.m) / s, state.n1 / sp.N,
            (state.X2 - state.n2 * sp.m) / s, state.n2 / sp.N)


def unscale(x1: float, t1: float, x2: float, t2: float, sp: ScaledPrior) -> tuple[float, float, float, float]:
    """Inverse of :func:`scale_state`, returning ``(X1, n1, X2, n2)`` as floats.

    Pull counts come back as ``t * N`` without rounding, so the round trip is
    exact up to floating point.
    """
    s = sp.scale
    n1, n2 = t1 * sp.N, t2 * sp.N
    return n1 * sp.m + x1 * s, n1, n2 * sp.m + x2 * s, n2


def g_limit(x1, t1, x2, t2, sp: ScaledPrior):
    """Scaled immediate losses ``(g1, g2)`` of the two actions.

    Each prior node contributes its positive gap times the product of the two
    Gaussian densities ``N(x_l; v_l t_l, t_l)``.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 <= 0) or np.any(t2 <= 0):
        raise ValueError("g_limit needs t1 > 0 and t2 > 0")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    g1 = np.zeros(np.broadcast(x1, t1, x2, t2).shape)
    g2 = np.zeros_like(g1)
    for v1, v2, w in zip(sp.v1, sp.v2, sp.weights):
        dens = w * gaussian_density(x1, v1 * t1, t1) * gaussian_density(x2, v2 * t2, t2)
        g1 = g1 + max(v2 - v1, 0.0) * dens
        g2 = g2 + max(v1 - v2, 0.0) * dens
    if g1.ndim == 0:
        return float(g1), float(g2)
    return g1, g2


def _g_separable(sp: ScaledPrior, x: np.ndarray, t1: float, t2: float):
    # (g1, g2) on the tensor grid x by x
    a = np.array([w * gaussian_density(x, v * t1, t1) for v, w in zip(sp.v1, sp.weights)])
    b = np.array([gaussian_density(x, v * t2, t2) for v in sp.v2])
    gap1 = np.maximum(sp.v2 - sp.v1, 0.0)
    gap2 = np.maximum(sp.v1 - sp.v2, 0.0)
    return (np.einsum("k,ki,kj->ij", gap1, a, b), np.einsum("k,ki,kj->ij", gap2, a, b))


def f_kernel(y, t: float, x_hat: float, eps: float):
    """Exact pre-limit transition factor of the exponential bandit in scaled units.

    ``f(1+y) = (1 + delta x_hat)^-1 (1 + (1+y) / (N t (1 + delta x_hat)))^(-t N)``
    with ``N = 1/eps`` and ``delta = sqrt(eps)``; zero for ``y < -1``.
    """
    if t <= 0 or eps <= 0:
        raise ValueError("t and eps must be positive")
    a = 1.0 + math.sqrt(eps) * x_hat
    if a <= 0:
        raise ValueError(f"1 + delta*x_hat = {a} must be positive (X would be nonpositive)")
    y = np.asarray(y, dtype=float)
    n = t / eps
    z = 1.0 + y
    with np.errstate(invalid="ignore"):
        out = np.where(z >= 0, np.exp(-n * np.log1p(np.maximum(z, 0.0) / (n * a))) / a, 0.0)
    return out[()] if out.ndim == 0 else out


def _kernel_tail(n: float, a: float, z: float) -> float:
    # mass of f beyond 1 + y = z, in closed form (needs n > 1)
    return n / (n - 1.0) * math.exp(-(n - 1.0) * math.log1p(z / (n * a)))


def kernel_moments(t: float, x_hat: float, eps: float) -> tuple[float, float, float]:
    """``(int f, int y f, int y^2 f)`` over ``y >= -1`` by adaptive quadrature."""
    n = t / eps
    if n <= 3:
        raise ValueError("the second moment of the kernel needs t/eps > 3")

    def moment(k):
        val = 0.0
        edges = [0.0, 1.0, 4.0, 16.0, 64.0, np.inf]
        for lo, hi in zip(edges[:-1], edges[1:]):
            val += integrate.quad(lambda z: (z - 1.0) ** k * float(f_kernel(z - 1.0, t, x_hat, eps)),
                                  lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
        return val

    return moment(0), moment(1), moment(2)


@dataclass
class MomentCheck:
    t: float
    x_hat: float
    eps: float
    mass_excess: float
    mean_error: float
    second_error: float
    tol_mass: float = 1e-6
    tol_mean: float = 5e-4
    tol_second: float = 0.02

    @property
    def passed(self) -> tuple[bool, bool, bool]:
        return (abs(self.mass_excess) <= self.tol_mass, abs(self.mean_error) <= self.tol_mean,
                abs(self.second_error) <= self.tol_second)


def moment_check(eps: float, ts: Sequence[float] = (0.1, 0.5, 0.9),
                 x_hats: Sequence[float] = (-2.0, 0.0, 2.0)) -> list[MomentCheck]:
    """Compare kernel moments with their first-order expansions.

    ``mass - 1 - eps/t``, ``mean - delta x_hat`` and ``second - 1`` are the
    reported errors.
    """
    out = []
    for t in ts:
        for xh in x_hats:
            m0, m1, m2 = kernel_moments(t, xh, eps)
            out.append(MomentCheck(t, xh, eps, m0 - 1.0 - eps / t, m1 - math.sqrt(eps) * xh, m2 - 1.0))
    return out


@dataclass
class ScaledField:
    """Scaled unnormalized risk on the lattice ``t_l = k_l * eps``.

    Only slices on a coarse lattice (every ``store_every`` steps, plus the
    first layer ``k_min``) are kept; ``branches[k1, k2]`` holds ``(tr1, tr2)``
    with axis 0 along ``x1``.
    """

    eps: float
    x: np.ndarray
    k_min: int
    kind: str
    store_every: int = 1
    branches: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return int(round(1.0 / self.eps))

    @property
    def delta(self) -> float:
        return math.sqrt(self.eps)

    def slices(self) -> list[tuple[int, int]]:
        return sorted(self.branches)

    def k_of(self, t: float) -> int:
        k = t / self.eps
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"t = {t} is not on the time grid of step {self.eps}")
        return int(round(k))

    def tr(self, k1: int, k2: int) -> np.ndarray:
        tr1, tr2 = self.branches[k1, k2]
        return np.minimum(tr1, tr2)

    def at(self, t1: float, t2: float) -> np.ndarray:
        key = (self.k_of(t1), self.k_of(t2))
        if key not in self.branches:
            raise ValueError(f"slice t = ({t1}, {t2}) was not stored")
        return self.tr(*key)

    def decision(self, k1: int, k2: int, tie_tol: float = 0.0) -> np.ndarray:
        """1 or 2 for the smaller branch, 0 for a tie."""
        tr1, tr2 = self.branches[k1, k2]
        out = np.where(tr1 < tr2, 1, 2)
        return np.where(np.abs(tr1 - tr2) <= tie_tol, 0, out)


def x_grid(span: float, step: float) -> np.ndarray:
    """Symmetric uniform grid ``i * step`` with ``|x| <= span``."""
    n = int(math.floor(span / step + 1e-9))
    return np.arange(-n, n + 1) * step


def _store_every(eps: float, store_dt: float | None) -> int:
    if store_dt is None or store_dt <= 0:
        return 1
    return max(1, int(round(store_dt / eps)))


def _first_layer(eps: float, t_min: float) -> int:
    k_min = int(math.ceil(t_min / eps - 1e-9))
    if k_min < 2:
        raise ValueError("t_min must be at least 2*eps: the one-pull kernel has infinite mass")
    return k_min


def _sweep(N: int, k_min: int, nx: int, ops: dict, source: Callable, keep: Callable,
           kind: str, eps: float, x: np.ndarray, store_every: int) -> ScaledField:
    """Backward induction over diagonals ``k1 + k2 = s`` with ``k1, k2 >= k_min``.

    ``ops[k]`` advances ``t_l = k eps`` by one step along its own axis and
    ``source(k1, k2)`` returns the two immediate-loss terms.
    """
    fld = ScaledField(eps=eps, x=x, k_min=k_min, kind=kind, store_every=store_every)
    prev: dict[int, np.ndarray] = {}
    zero = np.zeros((nx, nx))
    for s in range(N, 2 * k_min - 1, -1):
        cur: dict[int, np.ndarray] = {}
        for k1 in range(k_min, s - k_min + 1):
            k2 = s - k1
            if s == N:
                tr1 = tr2 = zero
            else:
                S1, S2 = source(k1, k2)
                # spline weights can be slightly negative; the exact values are not
                tr1 = np.maximum(ops[k1] @ prev[k1 + 1] + S1, 0.0)
                tr2 = np.maximum(prev[k1] @ ops[k2].T + S2, 0.0)
            cur[k1] = np.minimum(tr1, tr2)
            if keep(k1, k2):
                fld.branches[k1, k2] = (np.array(tr1, copy=True), np.array(tr2, copy=True))
        prev = cur
    return fld


def _keep_rule(k_min: int, every: int) -> Callable:
    return lambda k1, k2: (k1 % every == 0 and k2 % every == 0) or (k1 == k2 == k_min)


def _boundary_check(fld: ScaledField, tol: float = 0.01):
    worst = 0.0
    for k in fld.branches:
        tr = fld.tr(*k)
        peak = np.abs(tr).max()
        if peak <= 0:
            continue
        edge = max(np.abs(tr[[0, -1], :]).max(), np.abs(tr[:, [0, -1]]).max())
        worst = max(worst, edge / peak)
    fld.info["boundary_ratio"] = worst
    if worst > tol:
        msg = f"boundary values reach {worst:.3g} of the interior maximum; increase x_span"
        fld.warnings.append(msg)
        logger.warning(msg)


def _panel_edges(a: float, z_hi: float, width: float) -> np.ndarray:
    # panels of width <= min(width, a) where the kernel varies on scale a,
    # geometric growth up to the knot spacing, then the knot spacing itself
    fine = min(z_hi, 40.0 * a)
    w0 = min(width, a)
    parts = [np.linspace(0.0, fine, max(1, int(math.ceil(fine / w0))) + 1)]
    z = fine
    if z < z_hi and z < width:
        top = min(width, z_hi)
        parts.append(np.geomspace(z, top, max(2, int(math.ceil(8 * math.log(top / z)))))[1:])
        z = top
    if z < z_hi:
        parts.append(np.linspace(z, z_hi, max(1, int(math.ceil((z_hi - z) / width))) + 1)[1:])
    return np.concatenate(parts)


def exponential_operator(x: np.ndarray, t: float, eps: float, h_interp: str = "cubic",
                         warnings: list | None = None) -> np.ndarray:
    """Matrix of ``v -> int v(x + delta y) f(1+y) dy`` for pull count ``t/eps``.

    Rows with ``1 + delta x_hat <= A_FLOOR`` describe nonpositive cumulative
    income, which the model cannot reach; their kernel is evaluated at
    ``A_FLOOR`` so the operator stays defined.  Beyond the grid ``v`` is held
    at its end value, and the closed-form tail mass of the kernel is put on
    the last node.
    """
    n = t / eps
    delta = math.sqrt(eps)
    step = x[1] - x[0]
    a = 1.0 + delta * x / t
    low = a <= A_FLOOR
    if np.any(low) and warnings is not None:
        warnings.append(f"t={t:.6g}: {int(low.sum())} nodes with 1+delta*x_hat <= {A_FLOOR} clamped")
    a = np.maximum(a, A_FLOOR)
    tol = 1e-14
    pts, wts, tails = [], [], np.zeros(x.size)
    rows = []
    for i, (xi, ai) in enumerate(zip(x, a)):
        z_edge = 1.0 + (x[-1] - xi) / delta
        z_cap = n * ai * math.expm1(-math.log(tol * (n - 1.0) / n) / (n - 1.0))
        z_hi = min(z_edge, z_cap)
        edges = _panel_edges(ai, z_hi, step / delta)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        z = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        w = (half[:, None] * _GL_WEIGHTS).ravel()
        fz = np.exp(-n * np.log1p(z / (n * ai))) / ai
        pts.append(xi + delta * (z - 1.0))
        wts.append(w * fz)
        rows.append(i)
        if z_edge <= z_cap:
            tails[i] = _kernel_tail(n, ai, z_edge)
    width = max(p.size for p in pts)
    P = np.zeros((x.size, width))
    W = np.zeros((x.size, width))
    for i, (p, w) in enumerate(zip(pts, wts)):
        P[i, :p.size] = p
        P[i, p.size:] = p[-1]
        W[i, :w.size] = w
    A = _apply_interp(x, P, W, h_interp)
    A[:, -1] += tails
    return A


def gaussian_operator(x: np.ndarray, t: float, eps: float, h_interp: str = "cubic") -> np.ndarray:
    """Matrix of ``v -> (t+eps) int v(x + delta y) phi_{t(t+eps)}(delta x - t y) dy``.

    As a density in ``y`` the kernel is normal with mean ``delta x / t`` and
    variance ``(t+eps)/t``, scaled by the mass ``(t+eps)/t``.
    """
    delta = math.sqrt(eps)
    sd = math.sqrt((t + eps) / t)
    step = x[1] - x[0]
    width = min(step / delta, sd)
    span = 10.0 * sd
    panels = int(math.ceil(2 * span / width))
    u = np.linspace(-span, span, panels + 1)
    half = 0.5 * np.diff(u)
    mid = 0.5 * (u[:-1] + u[1:])
    base = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    bw = (half[:, None] * _GL_WEIGHTS).ravel()
    y = delta * x[:, None] / t + base[None, :]
    w = (t + eps) * gaussian_density(delta * x[:, None] - t * y, 0.0, t * (t + eps)) * bw[None, :]
    return _apply_interp(x, x[:, None] + delta * y, w, h_interp)


def _apply_interp(x, points, weights, h_interp):
    if h_interp == "cubic":
        return cubic_weighted_matrix(x, points, weights)
    if h_interp == "linear":
        return weighted_interp_matrix(x, points, weights, extrapolate="constant")
    raise ValueError(f"unknown interpolation {h_interp!r}")


def _solve_integro_difference(sp: ScaledPrior, eps: float, x_span: float, h: float, t_min: float,
                              interpolation: str, store_dt: float | None, kind: str) -> ScaledField:
    N = int(round(1.0 / eps))
    if abs(N * eps - 1.0) > 1e-9:
        raise ValueError("1/eps must be a positive integer")
    if x_span < 6:
        raise ValueError("x_span must be at least 6")
    k_min = _first_layer(eps, t_min)
    x = x_grid(x_span, h * math.sqrt(eps))
    warnings: list[str] = []
    ops = {}
    for k in range(k_min, N - k_min + 1):
        t = k * eps
        if kind == "exponential":
            ops[k] = exponential_operator(x, t, eps, interpolation, warnings)
        else:
            ops[k] = gaussian_operator(x, t, eps, interpolation)

    def source(k1, k2):
        g1, g2 = _g_separable(sp, x, k1 * eps, k2 * eps)
        return eps * g1, eps * g2

    every = _store_every(eps, store_dt)
    fld = _sweep(N, k_min, x.size, ops, source, _keep_rule(k_min, every), kind, eps, x, every)
    if warnings:
        fld.warnings.append(f"{len(warnings)} time layers clamp 1+delta*x_hat (first: {warnings[0]})")
    fld.info.update(h=h, x_span=x_span, t_min=t_min, interpolation=interpolation)
    _boundary_check(fld)
    return fld


def solve_integro_difference_exponential(sp: ScaledPrior, eps: float, x_span: float = X_SPAN, *,
                                         h: float = 1.0, t_min: float = T_MIN,
                                         interpolation: str = "cubic",
                                         store_dt: float | None = STORE_DT) -> ScaledField:
    """Scaled recursion with the exact exponential transition factor.

    Parameters
    ----------
    sp : ScaledPrior
    eps : float
        Time step; ``1/eps`` must be an integer.
    x_span : float
        Half-width of the income axes.
    h : float
        Income step in units of ``sqrt(eps)``.
    t_min : float
        First time layer visited (rounded up to the grid).
    interpolation : {"cubic", "linear"}
        Interpolation of ``tr`` between income nodes.  Linear interpolation
        adds a spurious diffusion of order ``h**2 / 6`` to the unit diffusion
        of the limit and is kept only for comparison.
    store_dt : float or None
        Spacing of the stored slice lattice; ``None`` keeps every slice.
    """
    return _solve_integro_difference(sp, eps, x_span, h, t_min, interpolation, store_dt, "exponential")


def solve_integro_difference_gaussian(sp: ScaledPrior, eps: float, x_span: float = X_SPAN, *,
                                      h: float = 1.0, t_min: float = T_MIN,
                                      interpolation: str = "cubic",
                                      store_dt: float | None = STORE_DT) -> ScaledField:
    """Scaled recursion of the Gaussian (batch) bandit; arguments as for the exponential one."""
    return _solve_integro_difference(sp, eps, x_span, h, t_min, interpolation, store_dt, "gaussian")


def _tridiagonal(x: np.ndarray, t: float, dx: float, drift: str):
    # coefficients of L v = v/t + x_hat v' + v''/2 with zero-gradient ends
    xh = x / t
    lo = np.full(x.size, 0.5 / dx ** 2)
    up = np.full(x.size, 0.5 / dx ** 2)
    di = np.full(x.size, -1.0 / dx ** 2 + 1.0 / t)
    if drift == "upwind":
        upwind = np.ones(x.size, dtype=bool)
    elif drift == "hybrid":
        upwind = np.abs(xh) * dx > 1.0
    else:
        raise ValueError(f"unknown drift scheme {drift!r}")
    c = ~upwind
    up[c] += xh[c] / (2 * dx)
    lo[c] -= xh[c] / (2 * dx)
    pos = upwind & (xh > 0)
    neg = upwind & (xh < 0)
    up[pos] += xh[pos] / dx
    di[pos] -= xh[pos] / dx
    lo[neg] -= xh[neg] / dx
    di[neg] += xh[neg] / dx
    # zero-gradient ghost nodes fold back onto the end nodes
    di[0] += lo[0]
    lo[0] = 0.0
    di[-1] += up[-1]
    up[-1] = 0.0
    rate = np.max(-(di - 1.0 / t))
    return lo, di, up, rate


def _apply_tridiagonal(M: np.ndarray, lo, di, up, tau) -> np.ndarray:
    out = M + tau * di[:, None] * M
    out[1:] += tau * lo[1:, None] * M[:-1]
    out[:-1] += tau * up[:-1, None] * M[1:]
    return out


def pde_operator(x: np.ndarray, t: float, dt: float, sp: ScaledPrior, arm: int,
                 drift: str = "hybrid", cfl: float = 0.9):
    """Explicit backward step of ``dt`` from ``t + dt`` to ``t`` along one income axis.

    Returns ``(A, C, substeps)``: the homogeneous step as a matrix, the
    immediate-loss contribution ``C[k]`` of each prior node (a vector along
    this axis, still to be multiplied by the node's density on the other
    axis), and the number of explicit sub-steps used to keep every update
    monotone.
    """
    dx = x[1] - x[0]
    v_own = sp.v1 if arm == 1 else sp.v2
    _, _, _, rate = _tridiagonal(x, t, dx, drift)
    substeps = max(1, int(math.ceil(dt * rate / cfl)))
    tau = dt / substeps
    A = np.eye(x.size)
    C = np.zeros((len(sp.weights), x.size))
    for j in range(substeps):
        s = t + dt - j * tau
        lo, di, up, _ = _tridiagonal(x, s, dx, drift)
        A = _apply_tridiagonal(A, lo, di, up, tau)
        C = _apply_tridiagonal(C.T, lo, di, up, tau).T
        C += tau * np.array([gaussian_density(x, v * s, s) for v in v_own])
    return A, C, substeps


def solve_pde(sp: ScaledPrior, eps_grid: float, x_span: float = X_SPAN, eps0: float = T_MIN, *,
              dx: float | None = None, drift: str = "hybrid", store_dt: float | None = STORE_DT,
              richardson: bool = False) -> ScaledField:
    """Explicit finite differences for the limiting HJB equation.

    Each backward step advances the diagonal ``t1 + t2`` by ``eps_grid``:
    both candidates (one per arm, each advancing its own time) are formed and
    the pointwise minimum is kept, as in the recursion.  The diffusion uses
    central differences.  ``drift="hybrid"`` takes central differences for
    the drift wherever they keep the update monotone (``|x_hat| dx <= 1``)
    and upwind differences elsewhere; ``drift="upwind"`` uses upwind
    everywhere at the price of numerical diffusion of order ``|x_hat| dx/2``.
    Time steps violating the explicit stability bound are split into
    sub-steps automatically and reported in ``info["substeps"]``.

    With ``richardson=True`` the problem is also solved with doubled steps
    and ``info["richardson_error"]`` holds ``max |F_h - F_2h|`` over the
    common nodes, the first-order error estimate of the field.
    """
    if not 0 < eps0 < 0.5:
        raise ValueError("eps0 must lie in (0, 0.5)")
    N = int(round(1.0 / eps_grid))
    if abs(N * eps_grid - 1.0) > 1e-9:
        raise ValueError("1/eps_grid must be a positive integer")
    k_min = _first_layer(eps_grid, eps0)
    dx = math.sqrt(eps_grid) if dx is None else dx
    x = x_grid(x_span, dx)
    A, C, sub = {}, {}, {}
    for k in range(k_min, N - k_min + 1):
        for arm in (1, 2):
            A[arm, k], C[arm, k], sub[arm, k] = pde_operator(x, k * eps_grid, eps_grid, sp, arm, drift)
    ops = {k: A[1, k] for k in range(k_min, N - k_min + 1)}
    if not all(np.array_equal(A[1, k], A[2, k]) for k in ops):
        raise AssertionError("arm operators differ on a shared grid")
    gap1 = np.maximum(sp.v2 - sp.v1, 0.0) * sp.weights
    gap2 = np.maximum(sp.v1 - sp.v2, 0.0) * sp.weights

    def source(k1, k2):
        t1, t2 = k1 * eps_grid, k2 * eps_grid
        d2 = np.array([gaussian_density(x, v * t2, t2) for v in sp.v2])
        d1 = np.array([gaussian_density(x, v * t1, t1) for v in sp.v1])
        S1 = np.einsum("k,ki,kj->ij", gap1, C[1, k1], d2)
        S2 = np.einsum("k,ki,kj->ij", gap2, d1, C[2, k2])
        return S1, S2

    every = _store_every(eps_grid, store_dt)
    fld = _sweep(N, k_min, x.size, ops, source, _keep_rule(k_min, every), "pde", eps_grid, x, every)
    most = max(sub.values())
    fld.info.update(dx=dx, x_span=x_span, t_min=eps0, drift=drift, substeps=most)
    if most > 1:
        fld.warnings.append(f"explicit stability bound: time steps split into up to {most} sub-steps")
    _boundary_check(fld)
    if richardson:
        coarse_eps = 1.0 / (N // 2) if N % 2 == 0 else None
        if coarse_eps is None:
            raise ValueError("Richardson estimate needs an even 1/eps_grid")
        coarse = solve_pde(sp, coarse_eps, x_span, eps0, dx=2 * dx, drift=drift, store_dt=store_dt)
        fld.info["richardson_error"] = field_distance(fld, coarse, relative=False)
    return fld


def _common_slices(a: ScaledField, b: ScaledField, t_sum_min: float = 0.0, t_each_min: float = 0.0):
    out = []
    for k1, k2 in a.slices():
        t1, t2 = k1 * a.eps, k2 * a.eps
        if t1 + t2 < t_sum_min - 1e-12 or min(t1, t2) < t_each_min - 1e-12:
            continue
        kb1, kb2 = t1 / b.eps, t2 / b.eps
        if abs(kb1 - round(kb1)) > 1e-9 or abs(kb2 - round(kb2)) > 1e-9:
            continue
        kb = (int(round(kb1)), int(round(kb2)))
        if kb in b.branches:
            out.append(((k1, k2), kb))
    return out


def _common_nodes(xa: np.ndarray, xb: np.ndarray):
    ia = np.flatnonzero(np.isclose(xa[:, None], xb[None, :], atol=1e-9).any(axis=1))
    ib = np.array([np.argmin(np.abs(xb - xa[i])) for i in ia])
    return ia, ib


def field_distance(a: ScaledField, b: ScaledField, t_sum_min: float = 0.0, t_each_min: float = 0.0,
                   relative: bool = True) -> float:
    """Sup-norm distance of ``tr`` over slices and income nodes both fields store.

    With ``relative=True`` the distance is divided by the sup-norm of ``b``
    over the same set.
    """
    pairs = _common_slices(a, b, t_sum_min, t_each_min)
    if not pairs:
        raise ValueError("the fields share no stored slices in the requested region")
    ia, ib = _common_nodes(a.x, b.x)
    diff = ref = 0.0
    for ka, kb in pairs:
        fa = a.tr(*ka)[np.ix_(ia, ia)]
        fb = b.tr(*kb)[np.ix_(ib, ib)]
        diff = max(diff, float(np.abs(fa - fb).max()))
        ref = max(ref, float(np.abs(fb).max()))
    return diff / ref if relative else diff


def scaled_risk(fld: ScaledField, sp: ScaledPrior, eps0: float) -> float:
    """Risk of the forced start ``2 eps0 N`` pulls followed by the stored policy.

    ``sqrt(D N) * (eps0 * E|v2 - v1| + iint tr(x1, eps0, x2, eps0) dx1 dx2)``,
    the double integral by the trapezoid rule on the field's income grid.
    """
    k0 = fld.k_of(eps0)
    if (k0, k0) not in fld.branches:
        raise ValueError(f"eps0 = {eps0} is not a stored slice of the field")
    tr = fld.tr(k0, k0)
    area = integrate.trapezoid(integrate.trapezoid(tr, fld.x, axis=1), fld.x)
    return sp.scale * (eps0 * sp.mean_abs_gap + float(area))


def scaled_risk_table(fields: Iterable[tuple[str, ScaledField]], sp: ScaledPrior, eps0: float) -> dict:
    return {name: scaled_risk(f, sp, eps0) for name, f in fields}
