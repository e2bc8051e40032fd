"""Overflow-safe products of exponentials and normal tail probabilities."""

import numpy as np
from scipy.special import erfcx, ndtr

SQRT2 = np.sqrt(2.0)


def exp_ndtr_tail(log_gauss, m):
    """Return ``exp(L) * Phi(-m)`` given ``log_gauss = L - m**2 / 2``.

    The caller supplies the exponent already combined with the Gaussian
    factor hidden inside ``Phi(-m)``. For ``m >= 0`` the product is written
    as ``exp(L - m^2/2) * erfcx(m / sqrt(2)) / 2`` which never overflows;
    for ``m < 0`` the tail probability is O(1) and the plain form is used.
    """
    log_gauss = np.asarray(log_gauss, dtype=float)
    m = np.asarray(m, dtype=float)
    log_gauss, m = np.broadcast_arrays(log_gauss, m)
    out = np.empty(m.shape)
    pos = m >= 0
    out[pos] = 0.5 * np.exp(log_gauss[pos]) * erfcx(m[pos] / SQRT2)
    neg = ~pos
    out[neg] = np.exp(log_gauss[neg] + 0.5 * m[neg] ** 2) * ndtr(-m[neg])
    return out if out.ndim else float(out)


def exp_ndtr(log_prefactor, m):
    """Return ``exp(L) * Phi(-m)`` for arbitrary ``L``.

    Convenience wrapper around :func:`exp_ndtr_tail`; loses some absolute
    accuracy in the exponent when ``L`` and ``m**2/2`` are both huge, so the
    closed forms pass the pre-combined exponent instead.
    """
    m = np.asarray(m, dtype=float)
    return exp_ndtr_tail(np.asarray(log_prefactor, dtype=float) - 0.5 * m**2, m)


def norm_cdf(z):
    return ndtr(z)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)
