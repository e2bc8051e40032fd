import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from elastic_default import pde
from elastic_default.checks import numerical_laplace
from elastic_default.contact import ContactParams, ebc_pd_sharp, first_passage_pd
from elastic_default.greens import g0_laplace, g0_reflecting, g_contact_laplace, g_contact_time
from elastic_default.model import DomainError, ModelParams


def mass(f, y, t, a, D):
    hi = y + abs(a) * t + 40.0 * math.sqrt(D * t)
    val, _ = integrate.quad(f, 0.0, hi, points=[y], epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def test_short_time_peak():
    t = 1e-6
    assert g0_reflecting(1.0, 1.0, t, 0.0, 0.5) == pytest.approx(
        1.0 / (2.0 * math.sqrt(math.pi * 0.5 * t)), rel=1e-12)


@pytest.mark.parametrize("t", [0.5, 5.0])
def test_reflecting_conserves_mass(t):
    assert mass(lambda x: g0_reflecting(x, 1.0, t, -0.1, 0.5), 1.0, t, -0.1, 0.5) == \
        pytest.approx(1.0, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-0.5, 0.5), D=st.floats(0.1, 1.0), t=st.floats(0.05, 10.0),
       y=st.floats(0.0, 3.0))
def test_conservation_sweep(a, D, t, y):
    assert mass(lambda x: g0_reflecting(x, y, t, a, D), y, t, a, D) == pytest.approx(1.0, abs=1e-8)


def test_zero_flux_at_wall():
    a, D, y, t = 0.3, 0.5, 1.0, 0.7
    h = 1e-5
    p0 = g0_reflecting(0.0, y, t, a, D)
    dp = (-3 * p0 + 4 * g0_reflecting(h, y, t, a, D) - g0_reflecting(2 * h, y, t, a, D)) / (2 * h)
    assert abs(a * p0 - D * dp) < 1e-8


def test_reflecting_matches_pde():
    params = ModelParams.from_drift(1.0, 0.2, 1.0)
    sol = pde.solve(params, None, "reflecting", pde.PdeGrid(t_max=2.0), snapshot_times=[2.0])
    p_num = np.interp(0.3, sol.x, sol.snapshots[-1])
    assert p_num == pytest.approx(g0_reflecting(0.3, 1.0, 2.0, 0.2, 0.5), abs=1e-4)


def test_wall_shift():
    assert g0_reflecting(1.3, 2.0, 1.0, 0.1, 0.5, xm=0.5) == \
        g0_reflecting(0.8, 1.5, 1.0, 0.1, 0.5)


@pytest.mark.parametrize("call", [
    lambda: g0_reflecting(1.0, 1.0, 0.0, 0.0, 0.5),
    lambda: g0_reflecting(-1.0, 1.0, 1.0, 0.0, 0.5),
    lambda: g0_laplace(1.0, 1.0, 0.0, 0.0, 0.5),
    lambda: g_contact_time(1.0, 1.0, 1.0, 0.0, 0.5, -1.0),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_laplace_driftless_origin():
    assert g0_laplace(0.0, 0.0, 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_laplace_matches_numerical_transform():
    closed = g0_laplace(0.5, 1.0, 2.0, 0.2, 0.5)
    numeric = numerical_laplace(lambda t: g0_reflecting(0.5, 1.0, t, 0.2, 0.5), 2.0)
    assert closed == pytest.approx(numeric, abs=1e-8)


def test_detailed_balance():
    # stationary density of the reflected process is proportional to exp(a x / D)
    a, D, s, x, y = 0.2, 0.5, 1.5, 0.4, 1.3
    lhs = g0_laplace(x, y, s, a, D) * math.exp(a * y / D)
    rhs = g0_laplace(y, x, s, a, D) * math.exp(a * x / D)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_contact_laplace_limits():
    for x, y in ((0.5, 1.0), (0.0, 0.0), (2.0, 0.3)):
        assert g_contact_laplace(x, y, 2.0, 0.2, 0.5, 0.0) == pytest.approx(
            g0_laplace(x, y, 2.0, 0.2, 0.5), rel=1e-15, abs=1e-15)
    assert g_contact_laplace(0.0, 0.0, 2.0, 0.2, 0.5, 1e6) < 1e-5


def test_contact_laplace_matches_numerical_transform():
    closed = g_contact_laplace(0.5, 1.0, 2.0, 0.2, 0.5, 0.3)
    numeric = numerical_laplace(lambda t: g_contact_time(0.5, 1.0, t, 0.2, 0.5, 0.3), 2.0)
    assert closed == pytest.approx(numeric, abs=1e-8)


def test_contact_time_reduces_to_reflecting():
    x = np.linspace(0.0, 4.0, 41)
    np.testing.assert_allclose(g_contact_time(x, 1.0, 1.5, -0.2, 0.5, 0.0),
                               g0_reflecting(x, 1.0, 1.5, -0.2, 0.5), rtol=0, atol=1e-12)


def test_radiation_condition():
    a, D, kc, y, t = -0.1, 0.5, 0.3, 1.0, 0.8
    h = 1e-5
    g = lambda x: g_contact_time(x, y, t, a, D, kc)
    dp = (-3 * g(0.0) + 4 * g(h) - g(2 * h)) / (2 * h)
    flux = a * g(0.0) - D * dp
    assert flux == pytest.approx(-kc * g(0.0), abs=1e-7)


def test_contact_mass_balance():
    a, D, kc, t = -0.1, 0.5, 0.3, 2.0
    surv = mass(lambda x: g_contact_time(x, 1.0, t, a, D, kc), 1.0, t, a, D)
    assert 1.0 - surv == pytest.approx(ebc_pd_sharp(t, ContactParams(1.0, a, D, kc)), abs=1e-8)


def test_contact_absorbing_limit():
    a, D, t = 0.2, 0.5, 1.0
    surv = mass(lambda x: g_contact_time(x, 1.0, t, a, D, 1e3), 1.0, t, a, D)
    assert surv == pytest.approx(1.0 - first_passage_pd(t, 1.0, a, D), abs=1e-3)


def test_monotone_loss():
    a, D = -0.1, 0.5
    survs = [[mass(lambda x: g_contact_time(x, 1.0, t, a, D, kc), 1.0, t, a, D)
              for t in (0.5, 1.0, 2.0, 4.0)] for kc in (0.0, 0.1, 0.5, 2.0)]
    s = np.array(survs)
    assert np.all(np.diff(s, axis=1) <= 1e-12)
    assert np.all(np.diff(s, axis=0) <= 1e-12)


def test_chapman_kolmogorov():
    a, D, x, y, t1, t2 = 0.15, 0.5, 0.7, 1.2, 0.6, 0.9
    f = lambda z: g0_reflecting(x, z, t1, a, D) * g0_reflecting(z, y, t2, a, D)
    val, _ = integrate.quad(f, 0.0, 15.0, points=[x, y], epsabs=1e-12, limit=400)
    assert val == pytest.approx(g0_reflecting(x, y, t1 + t2, a, D), abs=1e-6)


def test_no_overflow_for_strong_killing():
    v = g_contact_time(0.5, 1.0, 60.0, 0.2, 0.5, 5.0)
    assert np.isfinite(v) and v >= 0
