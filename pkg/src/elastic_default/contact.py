"""Closed-form default curves for Dirac (contact) killing.

This is the extended Black-Cox model: reflecting wall plus radiation boundary
``J(0) = -kc p(0)``, constant drift ``a`` and diffusion ``D``. The fuzzy
variant starts from a Gaussian spread ``delta`` around ``x0``; it is obtained
from the sharp formulas by the time/space shift
``t -> t + tau_delta``, ``x0 -> x0 - a tau_delta`` with
``tau_delta = delta**2 / 2D``, renormalised so that ``P(0) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainError, ModelParams, TermStructure
from .special import exp_ndtr_tail

# |kc + a| below this multiple of sigma^2 switches to the analytic limit
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class ContactParams:
    """Parameters of the contact model, distances measured from the wall."""

    x0: float
    a: float
    D: float
    kc: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.D > 0:
            raise DomainError(f"D must be positive, got {self.D}")
        if self.kc < 0:
            raise DomainError(f"kc must be >= 0, got {self.kc}")
        if self.delta < 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")
        if self.x0 < 0:
            raise DomainError(f"x0 must be >= 0 after the wall shift, got {self.x0}")

    @classmethod
    def from_model(cls, params: ModelParams, kc: float) -> "ContactParams":
        return cls(x0=params.x0 - params.xm, a=params.a, D=params.D, kc=kc,
                   delta=params.delta)

    @classmethod
    def from_tilde(cls, x0t, kct, at, deltat=0.0) -> "ContactParams":
        """Parameters in the sigma = 1 gauge (``D = 1/2``)."""
        return cls(x0=x0t, a=at, D=0.5, kc=kct, delta=deltat)

    @property
    def tau_delta(self) -> float:
        return self.delta**2 / (2.0 * self.D)


def _pieces(t, x0, a, D, kc):
    """Common Gaussian exponent and the three normal-tail terms."""
    s = np.sqrt(2.0 * D * t)
    log_g = -((x0 + a * t) ** 2) / (4.0 * D * t)
    t1 = exp_ndtr_tail(log_g, (x0 + a * t) / s)
    t2 = exp_ndtr_tail(log_g, (x0 - a * t) / s)        # exp(-a x0/D) Phi(-.)
    t3 = exp_ndtr_tail(log_g, (x0 + (a + 2.0 * kc) * t) / s)  # exp[(x0+(kc+a)t)kc/D] Phi(-.)
    return s, log_g, t1, t2, t3


def _pd_sharp(t, x0, a, D, kc):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    pos = t > 0
    if kc == 0 or not np.any(pos):
        return out
    tp = t[pos]
    s, log_g, t1, t2, t3 = _pieces(tp, x0, a, D, kc)
    eps = kc + a
    if abs(eps) < SINGULAR_TOL * 2.0 * D:
        # removable singularity kc = -a: l'Hopital on the last two terms
        val = t1 + (a * (x0 - a * tp) / D - 1.0) * t2 \
            - (2.0 * a * tp / s) * np.exp(log_g) / np.sqrt(2.0 * np.pi)
    else:
        val = t1 + kc / eps * t2 - (2.0 * kc + a) / eps * t3
    out[pos] = np.clip(val, 0.0, 1.0)
    return out


def _intensity_sharp(t, x0, a, D, kc):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    if kc == 0:
        return out
    pos = t > 0
    if x0 == 0:
        out[~pos] = np.inf
    if np.any(pos):
        tp = t[pos]
        _, log_g, _, _, t3 = _pieces(tp, x0, a, D, kc)
        val = kc * (np.exp(log_g) / np.sqrt(np.pi * D * tp) - (2.0 * kc + a) / D * t3)
        out[pos] = np.maximum(val, 0.0)
    return out


def _scalar(v, like):
    return v if np.ndim(like) else float(v[0])


def ebc_pd_sharp(t, p: ContactParams):
    """Cumulative PD for a sharp start at ``x0`` (``delta`` is ignored)."""
    return _scalar(_pd_sharp(t, p.x0, p.a, p.D, p.kc), t)


def ebc_intensity_sharp(t, p: ContactParams):
    """Default intensity ``dP/dt`` for a sharp start; ``kc`` times the wall density."""
    return _scalar(_intensity_sharp(t, p.x0, p.a, p.D, p.kc), t)


def ebc_survival_sharp(t, p: ContactParams):
    return _scalar(1.0 - _pd_sharp(t, p.x0, p.a, p.D, p.kc), t)


def _shifted(p: ContactParams):
    tau = p.tau_delta
    return tau, p.x0 - p.a * tau


def ebc_pd_fuzzy(t, p: ContactParams):
    """Cumulative PD with a Gaussian initial spread, normalised to ``P(0) = 0``."""
    tau, x0s = _shifted(p)
    if tau == 0:
        return ebc_pd_sharp(t, p)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    p_tau = _pd_sharp(np.array([tau]), x0s, p.a, p.D, p.kc)[0]
    num = _pd_sharp(t_arr + tau, x0s, p.a, p.D, p.kc) - p_tau
    val = np.clip(num / (1.0 - p_tau), 0.0, 1.0)
    val[t_arr == 0] = 0.0
    return _scalar(val, t)


def ebc_intensity_fuzzy(t, p: ContactParams):
    tau, x0s = _shifted(p)
    if tau == 0:
        return ebc_intensity_sharp(t, p)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    p_tau = _pd_sharp(np.array([tau]), x0s, p.a, p.D, p.kc)[0]
    lam = _intensity_sharp(t_arr + tau, x0s, p.a, p.D, p.kc) / (1.0 - p_tau)
    return _scalar(lam, t)


def ebc_hazard_fuzzy(t, p: ContactParams):
    """Hazard rate ``lambda / Omega``; positive at ``t = 0`` when ``delta > 0``."""
    tau, x0s = _shifted(p)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    lam = _intensity_sharp(t_arr + tau, x0s, p.a, p.D, p.kc)
    omega = 1.0 - _pd_sharp(t_arr + tau, x0s, p.a, p.D, p.kc)
    return _scalar(lam / omega, t)


def ebc_term_structure(tenors, p: ContactParams) -> TermStructure:
    """Term structure with analytic intensity (not finite differences)."""
    t = np.asarray(tenors, dtype=float)
    pd = np.atleast_1d(ebc_pd_fuzzy(t, p))
    lam = np.atleast_1d(ebc_intensity_fuzzy(t, p))
    omega = 1.0 - pd
    return TermStructure(t, pd, omega, -np.log1p(-pd), lam / omega, lam)


def first_passage_pd(t, x0, a, D):
    """Probability of reaching an absorbing barrier at distance ``x0`` by ``t``."""
    if not D > 0:
        raise DomainError(f"D must be positive, got {D}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    # a start on the barrier is absorbed immediately
    out = np.where((t_arr > 0) & (x0 <= 0), 1.0, 0.0)
    pos = (t_arr > 0) & (x0 > 0)
    if np.any(pos):
        _, _, t1, t2, _ = _pieces(t_arr[pos], x0, a, D, 0.0)
        out[pos] = np.clip(t1 + t2, 0.0, 1.0)
    return _scalar(out, t)


def first_passage_density(t, x0, a, D):
    """Inverse-Gaussian first hitting time density of the absorbing barrier."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    tp = t_arr[pos]
    out[pos] = x0 / np.sqrt(4.0 * np.pi * D * tp**3) * np.exp(-((x0 + a * tp) ** 2) / (4.0 * D * tp))
    return _scalar(out, t)


def creditgrades_pd(t, x0, sigma):
    """Driftless-leverage (``mu = 0``) first-passage PD in the CreditGrades form.

    With ``A = sigma sqrt(t)`` and ``d = exp(x0)``:
    ``P = 1 - Phi(-A/2 + ln d / A) + d Phi(-A/2 - ln d / A)``.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    A = sigma * np.sqrt(t_arr[pos])
    z_minus = x0 / A - 0.5 * A
    z_plus = x0 / A + 0.5 * A
    # 1 - Phi(z_minus) = Phi(-z_minus)
    not_survived = exp_ndtr_tail(-0.5 * z_minus**2, z_minus)
    # d * Phi(-z_plus) with ln d = x0 folded into the Gaussian exponent
    reflected = exp_ndtr_tail(x0 - 0.5 * z_plus**2, z_plus)
    out[pos] = not_survived + reflected
    return _scalar(out, t)
