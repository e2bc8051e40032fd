"""Weak-killing approximations.

Static limit, first-order intensity for an arbitrary killing profile, the
contact and Gaussian-layer closed forms, and the Neumann series of the
killed Green function up to second order.

The Gaussian-layer cumulative PD is normalised so that ``dP/dt`` equals
:func:`gaussian_intensity` exactly. The closed form with prefactor
``kc / sqrt(pi D)`` (see :func:`gaussian_pd_literal`) differentiates to half
of that intensity; it is kept for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import pde
from .greens import g0_reflecting
from .model import DomainError, KillingMeasure, ModelParams

WEAK_KILLING_LIMIT = 0.2
SQRT_2PI = math.sqrt(2.0 * math.pi)


class WeakKillingWarning(UserWarning):
    """The killing action is too large for first-order perturbation theory."""


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _gl_nodes(lo, hi, n):
    """Gauss-Legendre nodes/weights on ``[lo, hi]`` (broadcasts over array bounds)."""
    u, w = _gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (u + 1.0), half * w


def _sin2_nodes(t, n):
    """Nodes on ``[0, t]`` via ``s = t sin^2(phi)``; removes 1/sqrt endpoint singularities."""
    phi, w = _gl_nodes(0.0, 0.5 * math.pi, n)
    s = t * np.sin(phi) ** 2
    return s, w * 2.0 * t * np.sin(phi) * np.cos(phi)


# --- static limit ---------------------------------------------------------

def _truncated_gauss_nodes(x0, delta, xm, n=96):
    lo = max(xm, x0 - 12.0 * delta)
    y, w = _gl_nodes(lo, x0 + 12.0 * delta, n)
    dens = np.exp(-0.5 * ((y - x0) / delta) ** 2) / (delta * SQRT_2PI)
    mass = 1.0 - ndtr((xm - x0) / delta)
    return y, w * dens / mass


def static_intensity(t, killing: KillingMeasure, x0: float, delta: float = 0.0,
                     xm: float = 0.0, *, rtol: float = 1e-12):
    """Intensity with frozen positions: ``int phi(x - x0) k(x) exp(-k(x) t) dx``.

    A sharp start gives ``k(x0) exp(-k(x0) t)`` in closed form. A spread
    ``delta > 0`` uses a Gaussian truncated to ``x >= xm`` and renormalised,
    integrated adaptively.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise DomainError("t must be >= 0")
    if delta == 0:
        k0 = float(killing.rate(x0))
        out = k0 * np.exp(-k0 * t_arr)
    else:
        mass = 1.0 - ndtr((xm - x0) / delta)
        lo, hi = max(xm, x0 - 12.0 * delta), x0 + 12.0 * delta
        pts = [p for p in (x0, killing.xm) if lo < p < hi] if killing.kind == "gaussian" else [x0]

        def lam(tt):
            def f(x):
                k = float(killing.rate(x))
                phi = math.exp(-0.5 * ((x - x0) / delta) ** 2) / (delta * SQRT_2PI)
                return phi * k * math.exp(-k * tt)
            val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0,
                                    epsrel=rtol, limit=400)
            return val / mass

        out = np.array([lam(tt) for tt in t_arr])
    return out if np.ndim(t) else float(out[0])


# --- p0 providers -----------------------------------------------------------

def analytic_p0(params: ModelParams) -> Callable:
    """Killing-free pdf ``p0(x, t)`` from the reflecting Green function.

    A Gaussian start (truncated at the wall) is integrated by Gauss-Legendre
    quadrature over the source point.
    """
    a, D, xm = params.a, params.D, params.xm

    if params.delta == 0:
        def p0(x, t):
            return g0_reflecting(np.asarray(x, dtype=float), params.x0, t, a, D, xm)
        return p0

    y, w = _truncated_gauss_nodes(params.x0, params.delta, xm)

    def p0(x, t):
        x = np.asarray(x, dtype=float)
        g = g0_reflecting(x[..., None], y, t, a, D, xm)
        return np.sum(g * w, axis=-1)
    return p0


def pde_p0(params: ModelParams, grid: Optional[pde.PdeGrid] = None) -> Callable:
    """Killing-free pdf from the finite-volume solver, linearly interpolated in x.

    Each distinct ``t`` triggers one reflecting solve, cached.
    """
    cache = {}

    def p0(x, t):
        t = float(t)
        if t not in cache:
            g = grid or pde.PdeGrid(t_max=t)
            g = pde.PdeGrid(t_max=t, nx=g.nx, dt=g.dt, theta=g.theta, x_max=g.x_max,
                            stretch=g.stretch)
            sol = pde.solve(params, None, "reflecting", g, snapshot_times=[t])
            cache[t] = (sol.x, sol.snapshots[-1])
        xs, ps = cache[t]
        return np.interp(np.asarray(x, dtype=float), xs, ps, right=0.0)
    return p0


def _support(killing: KillingMeasure, xm: float):
    if killing.kind == "gaussian":
        return max(xm, killing.xm - 10.0 * killing.width), killing.xm + 10.0 * killing.width
    if killing.kind == "tabulated":
        return max(xm, float(killing.table_x[0])), float(killing.table_x[-1])
    return xm, xm


def first_order_intensity(t, killing: KillingMeasure, p0: Callable, xm: float = 0.0,
                          *, n_nodes: int = 400):
    """Lowest-order intensity ``int k(x) p0(x, t) dx``.

    Dirac killing reduces to ``kc p0(xm, t)``. Emits
    :class:`WeakKillingWarning` when ``kc t`` exceeds 0.2.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    strength = killing.strength
    if strength * float(np.max(t_arr)) > WEAK_KILLING_LIMIT:
        warnings.warn(f"kc*t = {strength * float(np.max(t_arr)):.3g} exceeds "
                      f"{WEAK_KILLING_LIMIT}; first-order result is unreliable",
                      WeakKillingWarning, stacklevel=2)
    out = np.zeros(t_arr.shape)
    if killing.kind == "none" or strength == 0:
        return out if np.ndim(t) else 0.0
    if killing.kind == "dirac":
        for i, tt in enumerate(t_arr):
            out[i] = killing.kc * float(np.asarray(p0(np.array([killing.xm]), tt))[0])
        return out if np.ndim(t) else float(out[0])
    lo, hi = _support(killing, xm)
    if killing.kind == "tabulated":
        # piecewise-linear k: Gauss-Legendre on every table interval
        edges = np.clip(np.asarray(killing.table_x, dtype=float), lo, hi)
        xs, ws = _gl_nodes(edges[:-1], edges[1:], 16)
        xs, ws = xs.ravel(), ws.ravel()
    else:
        xs, ws = _gl_nodes(lo, hi, n_nodes)
    k = killing.rate(xs)
    for i, tt in enumerate(t_arr):
        out[i] = float(np.sum(ws * k * p0(xs, tt)))
    return out if np.ndim(t) else float(out[0])


# --- closed forms ----------------------------------------------------------

def contact_asymptotic_intensity(t, x0, a, D, kc, delta=0.0, *, far_field=False):
    """First-order contact intensity ``kc p0(0, t)`` with a Gaussian start.

    ``far_field=True`` keeps only the free-diffusion term, valid for
    ``D t << (x0 + a t)^2``. Distances are measured from the wall.
    """
    t = np.asarray(t, dtype=float)
    tau = delta**2 / (2.0 * D)
    shifted = t + tau
    arg = x0 + a * t
    out = kc * np.exp(-arg**2 / (4.0 * D * shifted)) / np.sqrt(np.pi * D * shifted)
    if not far_field:
        out = out - kc * (a / D) * ndtr(-arg / np.sqrt(2.0 * D * shifted))
    return out if np.ndim(out) else float(out)


def gaussian_intensity(t, x0, a, D, kc, delta=0.0, Delta=0.0):
    """First-order intensity for a Gaussian layer at the wall, far-field form.

    ``tau = (delta^2 + Delta^2) / 2D``.
    """
    t = np.asarray(t, dtype=float)
    tau = (delta**2 + Delta**2) / (2.0 * D)
    u = t + tau
    with np.errstate(divide="ignore", invalid="ignore"):
        out = kc * np.exp(-(x0 + a * t) ** 2 / (4.0 * D * u)) / np.sqrt(np.pi * D * u)
    out = np.where(u > 0, out, 0.0)
    return out if np.ndim(out) else float(out)


def _F(u, x0, D):
    """Antiderivative of ``exp(-x0^2/4Du) / (2 sqrt(u))`` with ``F(0) = x0 sqrt(pi/D)``."""
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, x0 * math.sqrt(math.pi / D))
    pos = u > 0
    up = u[pos]
    out[pos] = (np.sqrt(up) * np.exp(-x0**2 / (4.0 * D * up))
                + x0 * math.sqrt(math.pi / D) * ndtr(x0 / np.sqrt(2.0 * D * up)))
    return out


def gaussian_pd_physical(t, x0, D, kc, tau):
    """``int_0^t gaussian_intensity(a=0)``: ``2 kc / sqrt(pi D) [F(t+tau) - F(tau)]``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    if tau < 0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    c = 2.0 * kc / math.sqrt(math.pi * D)
    out = c * (_F(t + tau, x0, D) - _F(np.array(tau), x0, D))
    out = np.clip(out, 0.0, None)
    return out if np.ndim(out) else float(out)


def gaussian_pd(t, x0t, kct, tau, xmt=0.0):
    """Gaussian-layer cumulative PD in tilde units (``sigma = 1``, ``D = 1/2``).

    ``P(t) = kct / sqrt(pi/2) * 2 [F(t + tau) - F(tau)]`` with
    ``F(u) = sqrt(u) exp(-X^2 / 2u) + sqrt(2 pi) X Phi(X / sqrt(u))`` and
    ``X = x0t - xmt``; the factor 2 makes ``dP/dt`` equal to
    :func:`gaussian_intensity`. Values above 1 (outside the weak-killing
    regime) are not clipped.
    """
    return gaussian_pd_physical(t, x0t - xmt, 0.5, kct, tau)


def gaussian_pd_literal(t, x0t, kct, tau, xmt=0.0):
    """Same closed form with prefactor ``kct / sqrt(pi/2)`` (half of :func:`gaussian_pd`)."""
    out = 0.5 * np.asarray(gaussian_pd(t, x0t, kct, tau, xmt))
    return out if np.ndim(out) else float(out)


# --- Neumann series ---------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Grid for the Neumann series.

    ``x_min``/``x_max``/``nx`` define the output (analytic provider) or the
    solver grid (PDE provider, uniform). ``nt`` is the number of time nodes:
    Gauss-Legendre nodes for the analytic provider, time steps for the PDE
    provider. ``rtol`` is the accepted relative error estimate.
    """

    x_min: float
    x_max: float
    nx: int = 401
    nt: int = 96
    rtol: float = 1e-4

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        if self.nx < 3 or self.nt < 2:
            raise DomainError("need nx >= 3 and nt >= 2")
        if not self.rtol > 0:
            raise DomainError(f"rtol must be positive, got {self.rtol}")

    @classmethod
    def covering(cls, params: ModelParams, t_max: float, **kw) -> "QuadratureSpec":
        """Smallest grid satisfying the coverage rule."""
        return cls(params.xm, pde.PdeGrid.required_extent(params, t_max) + params.xm, **kw)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


@dataclass(frozen=True, eq=False)
class NeumannResult:
    """Gridded ``G(x, y, t)`` with the individual series terms.

    ``terms[n]`` is the order-``n`` contribution (``terms[0] = G0``);
    ``values`` their sum; ``error`` a pointwise resolution estimate from a
    coarser companion computation.
    """

    x: np.ndarray
    y: float
    t: float
    order: int
    terms: list
    values: np.ndarray
    error: np.ndarray
    provider: str
    meta: dict = field(default_factory=dict)

    def survival(self, order: Optional[int] = None) -> float:
        """Trapezoidal ``int G dx`` up to ``order`` (default: full)."""
        order = self.order if order is None else order
        g = np.sum(self.terms[: order + 1], axis=0)
        return float(np.trapezoid(g, self.x))

    def intensity(self, killing: KillingMeasure, order: Optional[int] = None) -> float:
        """``int k G dx`` using the terms below ``order`` (order 1 uses G0 only)."""
        order = self.order if order is None else order
        g = np.sum(self.terms[:order], axis=0)
        if killing.kind == "dirac":
            return float(killing.kc * np.interp(killing.xm, self.x, g))
        return float(np.trapezoid(killing.rate(self.x) * g, self.x))


def _check_killing_grid(killing: KillingMeasure, x: np.ndarray):
    if not killing.is_smooth:
        return
    k = killing.rate(x)
    kmax = float(np.max(k))
    if kmax > 0 and float(np.max(np.abs(np.diff(k)))) > 0.1 * kmax:
        raise DomainError("killing profile changes by more than 10% between grid nodes; "
                          "refine the grid")


def _g0(x, y, t, a, D):
    return g0_reflecting(x, y, t, a, D, 0.0)


def _dirac_terms(x, y, t, a, D, kc, order, nt):
    """Dirac-at-wall series terms by one- and two-level time quadrature."""
    terms = [_g0(x, y, t, a, D)]
    if order == 0:
        return terms
    s, ws = _sin2_nodes(t, nt)
    # G0(0, y, s) for the first collision, G0(x, 0, t - s) for the last leg
    first = _g0(0.0, y, s, a, D)
    last = _g0(x[:, None], 0.0, t - s[None, :], a, D)
    terms.append(-kc * last @ (ws * first))
    if order == 2:
        # q(s) = int_0^s G0(0, 0, s - v) G0(0, y, v) dv
        q = np.empty_like(s)
        for i, si in enumerate(s):
            v, wv = _sin2_nodes(si, nt)
            q[i] = np.sum(wv * _g0(0.0, 0.0, si - v, a, D) * _g0(0.0, y, v, a, D))
        terms.append(kc * kc * last @ (ws * q))
    return terms


def _smooth_order1(x, y, t, a, D, killing, xm, nt, nz=24):
    """``-int dz k(z) int ds G0(x, z, t - s) G0(z, y, s)`` with windowed z-quadrature."""
    lo, hi = _support(killing, xm)
    lo, hi = lo - xm, hi - xm
    s, ws = _sin2_nodes(t, nt)
    wx = 8.0 * np.sqrt(2.0 * D * (t - s))
    wy = 8.0 * np.sqrt(2.0 * D * s)
    out = np.empty(x.size)
    for i, xi in enumerate(x):
        # breakpoints: support ends and the windows around x and y, per time node
        bp = np.stack([np.full_like(s, lo), np.full_like(s, hi),
                       xi - wx, xi + wx, y - wy, y + wy], axis=1)
        bp = np.sort(np.clip(bp, lo, hi), axis=1)
        z, wz = _gl_nodes(bp[:, :-1], bp[:, 1:], nz)        # (nt, 5, nz)
        k = killing.rate(z + xm)
        g_last = _g0(xi, z, (t - s)[:, None, None], a, D)
        g_first = _g0(z, y, s[:, None, None], a, D)
        inner = np.sum(wz * k * g_last * g_first, axis=(1, 2))
        out[i] = -np.sum(ws * inner)
    return out


def _pde_terms(params, killing, kc_wall, y, t, order, spec):
    """Source-term recursion ``dg_n/dt = L g_n - k g_{n-1}`` on a uniform grid."""
    # uniform solver grid with the source on a node; output is interpolated
    y0 = y - params.xm
    dx = (spec.x_max - spec.x_min) / (spec.nx - 1)
    if y0 > 0:
        dx = y0 / max(1, round(y0 / dx))
    x = np.arange(int(math.ceil((spec.x_max - params.xm) / dx - 1e-9)) + 1) * dx
    w = pde._weights(x)
    K = pde._transport_matrix(x, params.a, params.D, "reflecting", 0.0)
    W = pde.sp.diags(w, format="csc")
    k = killing.rate(x + params.xm) if killing.is_smooth else np.zeros(x.size)
    sink = w * k
    if kc_wall:
        sink[0] += kc_wall
    i0 = int(np.argmin(np.abs(x - y0)))
    g = np.zeros((order + 1, x.size))
    g[0, i0] = 1.0 / w[i0]
    h_full = t / spec.nt
    steps = [(1.0, 0.5 * h_full)] * pde.N_STARTUP + [(0.5, h_full)] * (spec.nt - pde.N_STARTUP // 2)
    factors = {}
    for theta, h in steps:
        if (theta, h) not in factors:
            factors[(theta, h)] = (pde.splu((W - theta * h * K).tocsc()),
                                   (W + (1.0 - theta) * h * K).tocsr())
        lu, rhs = factors[(theta, h)]
        new = np.empty_like(g)
        new[0] = lu.solve(rhs @ g[0])
        for n in range(1, order + 1):
            src = -h * sink * (theta * new[n - 1] + (1.0 - theta) * g[n - 1])
            new[n] = lu.solve(rhs @ g[n] + src)
        g = new
    x_out = spec.x - params.xm
    return [np.interp(x_out, x, g[n]) for n in range(order + 1)]


def neumann_green(killing: KillingMeasure, params: ModelParams, t: float, order: int,
                  grid: QuadratureSpec, provider: str = "analytic",
                  y: Optional[float] = None, *, estimate_error: bool = True) -> NeumannResult:
    """Weak-killing series for ``G(x, y, t)`` up to second order.

    Parameters
    ----------
    killing : KillingMeasure
        Dirac (on the wall) or smooth profile; time-independent.
    params : ModelParams
        Drift, diffusion and wall position; ``y`` defaults to ``params.x0``.
    order : {0, 1, 2}
    grid : QuadratureSpec
    provider : {"analytic", "pde"}
        ``"analytic"`` integrates the reflecting Green function (orders 0-2 for
        Dirac killing, 0-1 for smooth profiles); ``"pde"`` marches the
        source-term recursion on the grid.

    Raises
    ------
    DomainError
        Unsupported order/provider combination, a grid that does not cover
        the diffusion range, or a killing profile that is under-resolved.
    """
    if order not in (0, 1, 2):
        raise DomainError(f"order must be 0, 1 or 2, got {order}")
    if provider not in ("analytic", "pde"):
        raise DomainError(f"unknown provider {provider!r}")
    if not t > 0:
        raise DomainError("t must be positive")
    y = params.x0 if y is None else float(y)
    need = pde.PdeGrid.required_extent(params, t) + params.xm
    if grid.x_min > params.xm + 1e-12 or grid.x_max < need - 1e-9:
        raise DomainError(f"grid must cover [{params.xm:g}, {need:.6g}]")
    x_out = grid.x
    _check_killing_grid(killing, x_out)
    a, D, xm = params.a, params.D, params.xm
    kc_wall = killing.kc if killing.kind == "dirac" else 0.0

    def compute(spec):
        xs = spec.x - xm
        if provider == "pde":
            return _pde_terms(params, killing, kc_wall, y, t, order, spec)
        if killing.kind in ("none", "dirac"):
            return _dirac_terms(xs, y - xm, t, a, D, kc_wall, order, spec.nt)
        if order == 2:
            raise DomainError("the analytic provider supports smooth killing up to order 1; "
                              "use provider='pde'")
        terms = [_g0(xs, y - xm, t, a, D)]
        if order == 1:
            terms.append(_smooth_order1(xs, y - xm, t, a, D, killing, xm, spec.nt))
        return terms

    terms = compute(grid)
    if killing.kind == "none" or killing.strength == 0:
        terms = [terms[0]] + [np.zeros_like(terms[0]) for _ in terms[1:]]
    values = np.sum(terms, axis=0)
    error = np.zeros_like(values)
    if estimate_error:
        if provider == "pde":
            coarse_spec = QuadratureSpec(grid.x_min, grid.x_max, (grid.nx + 1) // 2,
                                         max(2, grid.nt // 2), grid.rtol)
            coarse = np.sum(compute(coarse_spec), axis=0)
            error = np.abs(values - np.interp(x_out, coarse_spec.x, coarse))
        elif order > 0 and killing.strength > 0:
            coarse_spec = QuadratureSpec(grid.x_min, grid.x_max, grid.nx,
                                         max(2, grid.nt // 2), grid.rtol)
            error = np.abs(values - np.sum(compute(coarse_spec), axis=0))
        scale = float(np.max(np.abs(values))) or 1.0
        if float(np.max(error)) > grid.rtol * scale:
            warnings.warn(f"Neumann series resolution error {float(np.max(error)):.3g} "
                          f"exceeds rtol*max|G| = {grid.rtol * scale:.3g}", RuntimeWarning,
                          stacklevel=2)
    return NeumannResult(x=x_out, y=y, t=float(t), order=order, terms=list(terms),
                         values=values, error=error, provider=provider,
                         meta={"nt": grid.nt, "nx": grid.nx})
