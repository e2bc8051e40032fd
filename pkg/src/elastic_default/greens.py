"""Green functions of constant-coefficient drift-diffusion on a half-line.

All functions take physical coordinates together with the wall location
``xm`` and shift internally so the wall sits at the origin. ``x`` is the
observation point and ``y`` the source point; ``a`` is the drift and ``D``
the diffusion coefficient.
"""

import numpy as np

from .model import DomainError
from .special import exp_ndtr_tail


def _shift(x, y, xm):
    x = np.asarray(x, dtype=float) - xm
    y = np.asarray(y, dtype=float) - xm
    if np.any(x < 0) or np.any(y < 0):
        raise DomainError("points must lie at or above the wall")
    return x, y


def _check_time(t, D):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("time must be strictly positive")
    if not D > 0:
        raise DomainError(f"diffusion coefficient must be positive, got {D}")
    return t


def _out(v):
    return v if np.ndim(v) else float(v)


def g0_reflecting(x, y, t, a, D, xm=0.0):
    """Transition density with a reflecting wall and no killing.

    Smoluchowski's solution: free propagator, its image, and the
    drift-induced boundary term written as ``exp * Phi`` in overflow-safe form.
    """
    x, y = _shift(x, y, xm)
    t = _check_time(t, D)
    four_dt = 4.0 * D * t
    pref = 1.0 / (2.0 * np.sqrt(np.pi * D * t))
    direct = np.exp(-((x - y - a * t) ** 2) / four_dt)
    image = np.exp(-((x + y - a * t) ** 2) / four_dt - a * y / D)
    m = (a * t + x + y) / np.sqrt(2.0 * D * t)
    tail = exp_ndtr_tail(a * x / D - (x + y + a * t) ** 2 / four_dt, m)
    return _out(pref * (direct + image) - (a / D) * tail)


def g_contact_time(x, y, t, a, D, kc, xm=0.0):
    """Transition density with a radiation wall ``J(xm) = -kc p(xm)``.

    ``kc = 0`` is the reflecting wall, ``kc -> inf`` the absorbing one.
    """
    if kc < 0:
        raise DomainError(f"kc must be >= 0, got {kc}")
    x, y = _shift(x, y, xm)
    t = _check_time(t, D)
    four_dt = 4.0 * D * t
    pref = 1.0 / (2.0 * np.sqrt(np.pi * D * t))
    direct = np.exp(-((x - y - a * t) ** 2) / four_dt)
    image = np.exp(-((x + y - a * t) ** 2) / four_dt - a * y / D)
    m = ((a + 2.0 * kc) * t + x + y) / np.sqrt(2.0 * D * t)
    # exp[((a+kc)(x+kc t) + kc y)/D] * Phi(-m), with the Gaussian factor of
    # Phi(-m) folded in analytically: L - m^2/2 = a x/D - (x+y+at)^2/(4Dt)
    tail = exp_ndtr_tail(a * x / D - (x + y + a * t) ** 2 / four_dt, m)
    return _out(pref * (direct + image) - ((a + 2.0 * kc) / D) * tail)


def _laplace_setup(x, y, s, a, D, xm):
    x, y = _shift(x, y, xm)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("Laplace variable must be strictly positive")
    if not D > 0:
        raise DomainError(f"diffusion coefficient must be positive, got {D}")
    # the drift-removing substitution shifts s by a^2/4D and contributes a
    # factor exp[a(x - y)/2D]
    r = np.sqrt(s + a * a / (4.0 * D))
    b = a / (2.0 * np.sqrt(D))
    factor = np.exp(a * (x - y) / (2.0 * D))
    return x, y, r, b, factor


def _g0u_laplace(x, y, r, b, a, D):
    sd = np.sqrt(D)
    far = np.exp(-(x + y) * r / sd)
    return (np.exp(-np.abs(x - y) * r / sd) / (2.0 * r * sd)
            + far / (2.0 * r * sd)
            - a / (2.0 * D * r * (r + b)) * far)


def g0_laplace(x, y, s, a, D, xm=0.0):
    """Laplace transform in time of :func:`g0_reflecting`."""
    x, y, r, b, factor = _laplace_setup(x, y, s, a, D, xm)
    return _out(factor * _g0u_laplace(x, y, r, b, a, D))


def g_contact_laplace(x, y, s, a, D, kc, xm=0.0):
    """Laplace transform in time of :func:`g_contact_time`.

    Built from the reflecting transform by the algebraic resolvent
    ``G = G0 - kc G0(x,0) G0(0,y) / (1 + kc G0(0,0))``.
    """
    if kc < 0:
        raise DomainError(f"kc must be >= 0, got {kc}")
    x, y, r, b, factor = _laplace_setup(x, y, s, a, D, xm)
    sd = np.sqrt(D)
    c = kc / sd
    far = np.exp(-(x + y) * r / sd)
    gu = _g0u_laplace(x, y, r, b, a, D) - far / sd * (1.0 / (r + b) - 1.0 / (r + b + c))
    return _out(factor * gu)
