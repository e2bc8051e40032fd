import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from elastic_default import pde
from elastic_default.contact import ContactParams, ebc_intensity_sharp, ebc_pd_sharp
from elastic_default.greens import g0_reflecting, g_contact_time
from elastic_default.model import DomainError, KillingMeasure, ModelParams
from elastic_default.perturb import (
    QuadratureSpec, WeakKillingWarning, analytic_p0, contact_asymptotic_intensity,
    first_order_intensity, gaussian_intensity, gaussian_pd, gaussian_pd_literal,
    neumann_green, pde_p0, static_intensity,
)

# 40-digit quadrature of the Gaussian-layer intensity (mpmath), frozen
GAUSS_BBB_30 = 0.2948823234101473988
GAUSS_A_LAMBDA_10 = 0.005722038761894051149


# --- static limit --------------------------------------------------------------

def test_static_closed_form():
    k = KillingMeasure.tabulated([0.0, 5.0], [0.5, 0.5])
    assert static_intensity(2.0, k, 1.0) == pytest.approx(0.18393972058572117, rel=1e-14)
    assert static_intensity(2.0, KillingMeasure.none(), 1.0) == 0.0


def test_static_gaussian_start_against_riemann_sum():
    k = KillingMeasure.gaussian(0.1, 0.2)
    x0, delta, t = 1.0, 0.3, 1.0
    val = static_intensity(t, k, x0, delta=delta)
    x = np.linspace(0.0, x0 + 12 * delta, 2_000_001)
    dx = x[1] - x[0]
    phi = norm.pdf(x, x0, delta) / norm.sf(-x0 / delta)
    kx = k.rate(x)
    riemann = np.sum(phi * kx * np.exp(-kx * t)) * dx
    assert val == pytest.approx(riemann, abs=1e-8)


def test_static_total_probability():
    k = KillingMeasure.tabulated([0.0, 5.0], [0.3, 0.3])
    val, _ = integrate.quad(lambda t: static_intensity(t, k, 1.0), 0.0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


# --- first order ---------------------------------------------------------------

def test_first_order_contact_reduction():
    params = ModelParams.from_drift(1.0, 0.0, 2.0)
    lam = first_order_intensity(1.0, KillingMeasure.dirac(0.05), analytic_p0(params))
    assert lam == pytest.approx(0.05 * g0_reflecting(0.0, 2.0, 1.0, 0.0, 0.5), rel=1e-15)


def test_thin_layer_equals_contact():
    params = ModelParams.from_drift(1.0, 0.0, 2.0)
    p0 = analytic_p0(params)
    thin = first_order_intensity(1.0, KillingMeasure.gaussian(0.05, 1e-4), p0)
    dirac = first_order_intensity(1.0, KillingMeasure.dirac(0.05), p0)
    assert thin == pytest.approx(dirac, abs=1e-6)


def test_first_order_against_pde():
    # kc t = 0.02
    params = ModelParams.from_drift(1.0, 0.0, 2.35)
    k = KillingMeasure.gaussian(0.02, 0.8)
    sol = pde.solve(params, k, "reflecting", pde.PdeGrid(t_max=1.0))
    lam_pde = sol.bulk_rate[-1]
    lam1 = first_order_intensity(1.0, k, analytic_p0(params))
    assert abs(lam1 - lam_pde) / lam_pde < 0.02


def test_pde_provider_matches_analytic():
    params = ModelParams.from_drift(1.0, 0.1, 1.5)
    k = KillingMeasure.gaussian(0.05, 0.5)
    a = first_order_intensity(2.0, k, analytic_p0(params))
    b = first_order_intensity(2.0, k, pde_p0(params))
    assert b == pytest.approx(a, rel=1e-3)


def test_tabulated_killing_first_order():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    tab = KillingMeasure.tabulated([0.0, 0.5, 1.0], [0.2, 0.1, 0.0])
    p0 = analytic_p0(params)
    ref, _ = integrate.quad(lambda x: float(tab.rate(x)) * p0(np.array([x]), 1.5)[0], 0, 1,
                            points=[0.5])
    assert first_order_intensity(1.5, tab, p0) == pytest.approx(ref, rel=1e-10)


def test_weak_killing_warning():
    p0 = analytic_p0(ModelParams.from_drift(1.0, 0.0, 2.0))
    with pytest.warns(WeakKillingWarning):
        first_order_intensity(3.0, KillingMeasure.dirac(0.1), p0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        first_order_intensity(1.0, KillingMeasure.dirac(0.1), p0)


# --- contact asymptotics -----------------------------------------------------

def test_asymptotic_forms_coincide_without_drift():
    t = np.linspace(0.1, 10.0, 30)
    np.testing.assert_array_equal(contact_asymptotic_intensity(t, 3.0, 0.0, 0.5, 0.05, 0.2),
                                  contact_asymptotic_intensity(t, 3.0, 0.0, 0.5, 0.05, 0.2,
                                                               far_field=True))


def test_far_field_gap():
    # the drift term is not negligible at this point: 1.70 %, not below 1 %
    full = contact_asymptotic_intensity(0.5, 3.0, -0.1, 0.5, 0.05, 0.2)
    far = contact_asymptotic_intensity(0.5, 3.0, -0.1, 0.5, 0.05, 0.2, far_field=True)
    assert abs(full - far) / full == pytest.approx(0.017038, rel=1e-3)


def test_asymptotic_equals_first_order_with_gaussian_start():
    params = ModelParams.from_drift(1.0, -0.1, 3.0, delta=0.2)
    lam1 = first_order_intensity(0.5, KillingMeasure.dirac(0.05), analytic_p0(params))
    full = contact_asymptotic_intensity(0.5, 3.0, -0.1, 0.5, 0.05, 0.2)
    assert lam1 == pytest.approx(full, abs=1e-3 * full)


# --- Gaussian layer ----------------------------------------------------------

def test_gaussian_intensity_matches_contact_asymptote():
    t = np.linspace(0.1, 10.0, 30)
    np.testing.assert_allclose(gaussian_intensity(t, 2.0, 0.0, 0.5, 0.05),
                               contact_asymptotic_intensity(t, 2.0, 0.0, 0.5, 0.05,
                                                            far_field=True), rtol=1e-14)


@pytest.mark.parametrize("x0,bound", [(1.0, 0.01), (3.38, 0.08)])
def test_gaussian_intensity_flat_before_tau(x0, bound):
    # relative drift over t < tau/100 is about (x0^2 / 2 tau - 1/2) / 100
    tau = 0.77
    lam0 = gaussian_intensity(0.0, x0, 0.0, 0.5, 0.04, Delta=math.sqrt(tau))
    t = np.linspace(0.0, tau / 100, 20)
    lam = gaussian_intensity(t, x0, 0.0, 0.5, 0.04, Delta=math.sqrt(tau))
    assert np.max(np.abs(lam - lam0) / lam0) < bound
    assert lam0 == pytest.approx(0.04 / math.sqrt(math.pi * 0.5 * tau)
                                 * math.exp(-x0**2 / (2 * tau)), rel=1e-14)


def test_gaussian_a_row_values():
    lam = gaussian_intensity(10.0, 3.38, 0.0, 0.5, 0.04, Delta=math.sqrt(0.77))
    assert lam == pytest.approx(GAUSS_A_LAMBDA_10, rel=1e-13)
    h = 1e-4
    dp = (gaussian_pd(10.0 + h, 3.38, 0.04, 0.77) - gaussian_pd(10.0 - h, 3.38, 0.04, 0.77)) / (2 * h)
    assert dp == pytest.approx(lam, rel=1e-8)


def test_gaussian_pd_values():
    assert gaussian_pd(0.0, 2.35, 0.06, 0.63) == 0.0
    assert gaussian_pd(30.0, 2.35, 0.06, 0.63) == pytest.approx(GAUSS_BBB_30, rel=1e-13)
    h = 1e-4
    dp = (gaussian_pd(5.0 + h, 2.35, 0.06, 0.63) - gaussian_pd(5.0 - h, 2.35, 0.06, 0.63)) / (2 * h)
    assert dp == pytest.approx(gaussian_intensity(5.0, 2.35, 0.0, 0.5, 0.06,
                                                  Delta=math.sqrt(0.63)), abs=1e-8)


def test_literal_convention_is_half():
    t = np.linspace(0.0, 30.0, 31)
    np.testing.assert_allclose(gaussian_pd_literal(t, 2.35, 0.06, 0.63),
                               0.5 * gaussian_pd(t, 2.35, 0.06, 0.63), rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(0.0, 4.0), kc=st.floats(0.001, 0.2), tau=st.floats(0.0, 2.0))
def test_gaussian_pd_shape(x0, kc, tau):
    t = np.linspace(0.0, 60.0, 121)
    p = gaussian_pd(t, x0, kc, tau)
    assert np.all(np.diff(p) >= -1e-14)
    # long-time tail of the intensity
    big = 1e6
    h = 1.0
    lam = (gaussian_pd(big + h, x0, kc, tau) - gaussian_pd(big - h, x0, kc, tau)) / (2 * h)
    assert lam == pytest.approx(kc / math.sqrt(math.pi * 0.5 * big), rel=1e-3)


# --- Neumann series ----------------------------------------------------------

def test_neumann_without_killing_is_g0():
    params = ModelParams.from_drift(1.0, 0.1, 1.0)
    grid = QuadratureSpec.covering(params, 1.0)
    ref = g0_reflecting(grid.x, 1.0, 1.0, 0.1, 0.5)
    for order in (0, 1, 2):
        res = neumann_green(KillingMeasure.none(), params, 1.0, order, grid)
        assert np.max(np.abs(res.values - ref)) < 1e-12


def test_neumann_first_order_survival():
    params = ModelParams.from_drift(1.0, 0.0, 1.5)
    k = KillingMeasure.gaussian(0.05, 0.6)
    t = 1.0
    res = neumann_green(k, params, t, 1, QuadratureSpec.covering(params, t, nx=801, nt=64))
    p0 = analytic_p0(params)
    lost, _ = integrate.quad(lambda u: first_order_intensity(u, k, p0), 0.0, t, epsabs=1e-12)
    assert 1.0 - res.survival(1) == pytest.approx(lost, abs=1e-4)


def _dirac_errors(kc, t, params):
    grid = QuadratureSpec.covering(params, t, nx=601, nt=96)
    res = neumann_green(KillingMeasure.dirac(kc), params, t, 2, grid)
    exact = g_contact_time(grid.x, params.x0, t, params.a, params.D, kc)
    return [float(np.max(np.abs(np.sum(res.terms[:n + 1], axis=0) - exact))) for n in range(3)]


def test_neumann_dirac_error_scaling():
    params = ModelParams.from_drift(1.0, -0.1, 1.0)
    t = 1.0
    e = _dirac_errors(0.1, t, params)   # kc t = 0.1
    assert e[1] < e[0] and e[2] < e[1]
    assert 0.03 < e[1] / e[0] < 0.3
    assert 0.03 < e[2] / e[1] < 0.3
    # halving kc: order-1 error falls ~4x, order-2 error ~8x
    h = _dirac_errors(0.05, t, params)
    assert h[1] / e[1] == pytest.approx(0.25, rel=0.15)
    assert h[2] / e[2] == pytest.approx(0.125, rel=0.2)


def test_neumann_series_ordering():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    for kc in (0.05, 0.2):
        res = neumann_green(KillingMeasure.dirac(kc), params, 1.0, 2,
                            QuadratureSpec.covering(params, 1.0))
        s0, s1, s2 = res.survival(0), res.survival(1), res.survival(2)
        assert s1 <= s0 and s2 >= s1
        exact = 1.0 - ebc_pd_sharp(1.0, ContactParams(1.0, 0.0, 0.5, kc))
        assert abs(s2 - exact) <= abs(s1 - exact)


def test_neumann_pde_provider_gaussian_convergence():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    k = KillingMeasure.gaussian(0.2, 0.5)
    t = 1.0
    grid = QuadratureSpec.covering(params, t, nx=1201, nt=800)
    res = neumann_green(k, params, t, 2, grid, provider="pde", estimate_error=False)
    sol = pde.solve(params, k, "reflecting", pde.PdeGrid(t_max=t, nx=4000, dt=2.5e-4))
    exact = 1.0 - sol.pd[-1]
    e1 = abs(res.survival(1) - exact)
    e2 = abs(res.survival(2) - exact)
    assert e2 < e1
    assert res.survival(1) <= res.survival(0) and res.survival(2) >= res.survival(1)


def test_neumann_intensity_orders_against_contact():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    t, kc = 1.0, 0.1
    res = neumann_green(KillingMeasure.dirac(kc), params, t, 2, QuadratureSpec.covering(params, t))
    exact = ebc_intensity_sharp(t, ContactParams(1.0, 0.0, 0.5, kc))
    e1 = abs(res.intensity(KillingMeasure.dirac(kc), 1) - exact)
    e2 = abs(res.intensity(KillingMeasure.dirac(kc), 2) - exact)
    assert e2 < e1


def test_neumann_refuses_coarse_grid_and_bad_input():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    narrow = KillingMeasure.gaussian(0.1, 0.01)
    with pytest.raises(DomainError, match="10%"):
        neumann_green(narrow, params, 1.0, 1, QuadratureSpec.covering(params, 1.0, nx=101))
    with pytest.raises(DomainError):
        neumann_green(KillingMeasure.dirac(0.1), params, 1.0, 3, QuadratureSpec.covering(params, 1.0))
    with pytest.raises(DomainError, match="cover"):
        neumann_green(KillingMeasure.dirac(0.1), params, 1.0, 1, QuadratureSpec(0.0, 2.0))
    with pytest.raises(DomainError):
        neumann_green(KillingMeasure.gaussian(0.1, 0.5), params, 1.0, 2,
                      QuadratureSpec.covering(params, 1.0))


def test_neumann_error_estimate_is_reported():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    res = neumann_green(KillingMeasure.dirac(0.1), params, 1.0, 1,
                        QuadratureSpec.covering(params, 1.0))
    assert res.error.shape == res.values.shape
    assert np.max(res.error) < 1e-4 * np.max(res.values)


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(1.0, 0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(0.0, 1.0, rtol=0.0)
