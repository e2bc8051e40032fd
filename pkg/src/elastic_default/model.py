"""Shared domain types and the model-independent survival identities.

The state variable is the log inverse leverage ``x = -ln R``.  Paths diffuse
with drift ``a = mu - sigma**2/2`` and diffusion coefficient
``D = sigma**2/2`` above a reflecting wall at ``xm`` and are terminated by a
position-dependent killing rate ``k(x)``.

Every default curve is carried around as a :class:`TermStructure` holding the
cumulative PD ``P``, survival ``Omega = 1 - P``, cumulative hazard
``H = -ln Omega``, hazard rate ``h`` and intensity ``lambda = dP/dt = h Omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Transport coefficients and initial condition of the diffusion.

    Parameters
    ----------
    sigma : float
        Asset volatility, yr^-1/2. Must be positive.
    mu : float
        Expected rate of change of the leverage ratio, yr^-1.
    x0 : float
        Mean initial log inverse leverage.
    delta : float
        Standard deviation of the (Gaussian) initial distribution of ``x``.
    xm : float
        Location of the reflecting wall.
    """

    sigma: float
    mu: float
    x0: float
    delta: float = 0.0
    xm: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma}")
        if self.delta < 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")
        if self.x0 < self.xm:
            raise DomainError(f"x0={self.x0} lies below the wall xm={self.xm}")
        for name in ("mu", "x0", "delta", "xm"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @classmethod
    def from_drift(cls, sigma, a, x0, delta=0.0, xm=0.0) -> "ModelParams":
        """Build parameters from the effective drift ``a`` instead of ``mu``."""
        return cls(sigma=sigma, mu=a + 0.5 * sigma**2, x0=x0, delta=delta, xm=xm)

    @property
    def a(self) -> float:
        return self.mu - 0.5 * self.sigma**2

    @property
    def D(self) -> float:
        return 0.5 * self.sigma**2

    @property
    def tau_delta(self) -> float:
        """Time shift ``delta**2 / 2D`` equivalent to the initial spread."""
        return self.delta**2 / (2.0 * self.D)


@dataclass(frozen=True, eq=False)
class KillingMeasure:
    """Time-independent spatial killing profile ``k(x)``.

    Use the constructors :meth:`none`, :meth:`dirac`, :meth:`gaussian` and
    :meth:`tabulated` rather than the raw fields.

    Dirac killing sits on the wall and acts through the radiation boundary
    condition ``J(xm) = -kc p(xm)``; its bulk :meth:`rate` is zero.

    The Gaussian layer is centred on the wall. With ``normalization="domain"``
    (the default) the accessible half-line ``x >= xm`` carries total rate
    ``kc``, so ``width -> 0`` recovers Dirac killing of strength ``kc`` and the
    weak-killing intensity is ``kc/sqrt(pi D (t+tau)) exp(...)``. With
    ``normalization="full_line"`` the profile integrates to ``kc`` over the
    whole real line and only half of it is reachable.
    """

    kind: str
    kc: float = 0.0
    width: float = 0.0
    xm: float = 0.0
    normalization: str = "domain"
    table_x: Optional[np.ndarray] = None
    table_k: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("none", "dirac", "gaussian", "tabulated"):
            raise DomainError(f"unknown killing kind {self.kind!r}")
        if not (self.kc >= 0 and math.isfinite(self.kc)):
            raise DomainError(f"killing strength must be finite and >= 0, got {self.kc}")
        if self.kind == "gaussian":
            if not self.width > 0:
                raise DomainError(f"Gaussian layer width must be > 0, got {self.width}")
            if self.normalization not in ("domain", "full_line"):
                raise DomainError(f"unknown normalization {self.normalization!r}")
        if self.kind == "tabulated":
            tx = np.asarray(self.table_x, dtype=float)
            tk = np.asarray(self.table_k, dtype=float)
            if tx.ndim != 1 or tx.shape != tk.shape or tx.size < 2:
                raise DomainError("tabulated killing needs matching 1-D x and k arrays (>= 2 points)")
            if np.any(np.diff(tx) <= 0):
                raise DomainError("tabulated killing grid must be strictly increasing")
            if not np.all(np.isfinite(tk)) or np.any(tk < 0):
                raise DomainError("tabulated killing rates must be finite and >= 0")

    @classmethod
    def none(cls) -> "KillingMeasure":
        return cls("none")

    @classmethod
    def dirac(cls, kc, xm=0.0) -> "KillingMeasure":
        return cls("dirac", kc=float(kc), xm=float(xm))

    @classmethod
    def gaussian(cls, kc, width, xm=0.0, normalization="domain") -> "KillingMeasure":
        return cls("gaussian", kc=float(kc), width=float(width), xm=float(xm),
                   normalization=normalization)

    @classmethod
    def tabulated(cls, x, k) -> "KillingMeasure":
        return cls("tabulated", table_x=_frozen(x), table_k=_frozen(k))

    @property
    def peak(self) -> float:
        """Amplitude of the Gaussian layer at the wall."""
        amp = self.kc / (self.width * math.sqrt(2.0 * math.pi))
        return 2.0 * amp if self.normalization == "domain" else amp

    @property
    def strength(self) -> float:
        """Total killing rate integrated over ``x >= xm``."""
        if self.kind == "tabulated":
            return float(np.trapezoid(self.table_k, self.table_x))
        if self.kind == "gaussian" and self.normalization == "full_line":
            return 0.5 * self.kc
        return self.kc

    @property
    def is_smooth(self) -> bool:
        """True when killing acts in the bulk rather than through the wall."""
        return self.kind in ("gaussian", "tabulated")

    def rate(self, x):
        """Bulk killing rate ``k(x)`` in yr^-1 (zero for Dirac and none)."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("none", "dirac"):
            return np.zeros_like(x)
        if self.kind == "gaussian":
            return self.peak * np.exp(-0.5 * ((x - self.xm) / self.width) ** 2)
        return np.interp(x, self.table_x, self.table_k, left=0.0, right=0.0)

    def max_rate(self) -> float:
        if self.kind == "gaussian":
            return self.peak
        if self.kind == "tabulated":
            return float(np.max(self.table_k))
        return 0.0


@dataclass(frozen=True, eq=False)
class TermStructure:
    """Default term structure on a tenor grid (years)."""

    tenors: np.ndarray
    pd: np.ndarray
    survival: np.ndarray
    cum_hazard: np.ndarray
    hazard: np.ndarray
    intensity: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("tenors", "pd", "survival", "cum_hazard", "hazard", "intensity"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.stderr is not None:
            object.__setattr__(self, "stderr", _frozen(self.stderr))
        n = self.tenors.shape
        if len(n) != 1 or any(getattr(self, f).shape != n for f in
                              ("pd", "survival", "cum_hazard", "hazard", "intensity")):
            raise DomainError("term structure columns must be 1-D arrays of equal length")
        if self.stderr is not None and self.stderr.shape != n:
            raise DomainError("stderr column has the wrong length")
        if np.any(self.tenors < 0) or np.any(np.diff(self.tenors) <= 0):
            raise DomainError("tenors must be >= 0 and strictly increasing")
        if np.any(self.pd < 0) or np.any(self.pd > 1):
            raise DomainError("pd values must lie in [0, 1]")
        if np.any(np.diff(self.pd) < -1e-12):
            raise DomainError("pd must be non-decreasing in t")

    def __len__(self):
        return self.tenors.size

    def with_stderr(self, stderr) -> "TermStructure":
        return TermStructure(self.tenors, self.pd, self.survival, self.cum_hazard,
                             self.hazard, self.intensity, stderr)


@dataclass(frozen=True, eq=False)
class DefaultCurve:
    """Empirical cumulative default observations for one rating bucket."""

    label: str
    tenors: np.ndarray
    pd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tenors", _frozen(self.tenors))
        object.__setattr__(self, "pd", _frozen(self.pd))
        if self.tenors.ndim != 1 or self.tenors.shape != self.pd.shape:
            raise DomainError("default curve needs matching 1-D tenor and pd arrays")
        if np.any(np.diff(self.tenors) <= 0):
            raise DomainError("default curve tenors must be strictly increasing")
        if np.any(self.pd < 0) or np.any(self.pd > 1):
            raise DomainError("default curve pd values must lie in [0, 1]")
        if np.any(np.diff(self.pd) < 0):
            raise DomainError("default curve pd values must be non-decreasing")

    @classmethod
    def from_points(cls, label, points: Sequence[tuple]) -> "DefaultCurve":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(label, pts[:, 0], pts[:, 1])

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.tenors, self.pd])

    def __len__(self):
        return self.tenors.size


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a random-search calibration in tilde units."""

    model_kind: str
    params: Mapping[str, float]
    objective: float
    trace: list = field(default_factory=list)
    initial_params: Mapping[str, float] = field(default_factory=dict)
    n_rejected_nonfinite: int = 0
    degenerate: bool = False


def _derivative(y, t):
    # second-order centred in the interior, second-order one-sided at the ends
    if t.size == 1:
        return np.zeros_like(y)
    edge = 2 if t.size >= 3 else 1
    return np.gradient(y, t, edge_order=edge)


def curve_from_pd(tenors, pd) -> TermStructure:
    """Fill all term-structure columns from a cumulative PD curve.

    ``lambda = dP/dt`` is estimated by finite differences on the tenor grid;
    ``h = lambda / Omega``.

    Raises
    ------
    DomainError
        If any ``P = 1`` (infinite cumulative hazard) or the inputs are not a
        valid curve.
    """
    t = np.atleast_1d(np.asarray(tenors, dtype=float))
    p = np.atleast_1d(np.asarray(pd, dtype=float))
    if t.shape != p.shape or t.ndim != 1:
        raise DomainError("tenors and pd must be 1-D arrays of equal length")
    if np.any(np.diff(t) <= 0):
        raise DomainError("tenors must be strictly increasing")
    if np.any(p < 0) or np.any(p > 1):
        raise DomainError("pd values must lie in [0, 1]")
    if np.any(np.diff(p) < 0):
        raise DomainError("pd must be non-decreasing")
    full = np.nonzero(p >= 1.0)[0]
    if full.size:
        raise DomainError(f"P = 1 at tenor {float(t[full[0]])!r}: cumulative hazard is infinite")
    survival = 1.0 - p
    intensity = _derivative(p, t)
    return TermStructure(
        tenors=t,
        pd=p,
        survival=survival,
        cum_hazard=-np.log1p(-p),
        hazard=intensity / survival,
        intensity=intensity,
    )


def survival_ode_residual(ts: TermStructure) -> float:
    """Max over the grid of ``|dOmega/dt + h Omega|``.

    Uses the same stencil as :func:`curve_from_pd`, so curves produced by it
    give round-off; externally supplied curves give a consistency gauge.
    """
    d_omega = _derivative(np.asarray(ts.survival), np.asarray(ts.tenors))
    return float(np.max(np.abs(d_omega + ts.hazard * ts.survival)))


TILDE_KEYS = ("x0t", "xmt", "kct", "at", "deltat", "Deltat", "tau")


def to_tilde(params: ModelParams, killing: Optional[KillingMeasure] = None) -> dict:
    """Rescale lengths and rates by sigma (the sigma = 1 gauge)."""
    s = params.sigma
    killing = killing or KillingMeasure.none()
    width = killing.width if killing.kind == "gaussian" else 0.0
    out = {
        "x0t": params.x0 / s,
        "xmt": params.xm / s,
        "kct": killing.kc / s,
        "at": params.a / s,
        "deltat": params.delta / s,
        "Deltat": width / s,
    }
    out["tau"] = out["deltat"] ** 2 + out["Deltat"] ** 2
    return out


def from_tilde(tilde: Mapping[str, float], sigma: float = 1.0, kind: Optional[str] = None):
    """Inverse of :func:`to_tilde`.

    Returns ``(ModelParams, KillingMeasure)``. The killing kind is Gaussian
    when ``Deltat > 0``, Dirac when ``kct > 0`` and none otherwise, unless
    given explicitly.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    x0 = tilde.get("x0t", 0.0) * sigma
    xm = tilde.get("xmt", 0.0) * sigma
    kc = tilde.get("kct", 0.0) * sigma
    a = tilde.get("at", 0.0) * sigma
    delta = tilde.get("deltat", 0.0) * sigma
    width = tilde.get("Deltat", 0.0) * sigma
    params = ModelParams.from_drift(sigma, a, x0, delta=delta, xm=xm)
    if kind is None:
        kind = "gaussian" if width > 0 else ("dirac" if kc > 0 else "none")
    if kind == "gaussian":
        killing = KillingMeasure.gaussian(kc, width, xm=xm)
    elif kind == "dirac":
        killing = KillingMeasure.dirac(kc, xm=xm)
    else:
        killing = KillingMeasure.none()
    return params, killing
