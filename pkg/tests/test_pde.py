import numpy as np
import pytest

from elastic_default import pde
from elastic_default.contact import ContactParams, ebc_pd_sharp, first_passage_density
from elastic_default.model import DomainError, KillingMeasure, ModelParams
from elastic_default.perturb import gaussian_pd

BASE = ModelParams.from_drift(1.0, -0.1, 1.0)


@pytest.fixture(scope="module")
def radiation_run():
    return pde.solve(BASE, KillingMeasure.dirac(0.3), grid=pde.PdeGrid(t_max=10.0))


def test_reflecting_conserves_probability():
    sol = pde.solve(BASE, None, "reflecting", pde.PdeGrid(t_max=10.0))
    assert np.max(np.abs(sol.mass - 1.0)) < 1e-10
    assert np.all(sol.pd[sol.times > 0] < 1e-10)


def test_radiation_matches_closed_form(radiation_run):
    ts = radiation_run.term_structure()
    exact = ebc_pd_sharp(ts.tenors, ContactParams(1.0, -0.1, 0.5, 0.3))
    m = exact > 1e-4
    assert np.max(np.abs(ts.pd[m] / exact[m] - 1.0)) < 1e-3


def test_ledger_balance(radiation_run):
    assert radiation_run.balance_residual() < 1e-10
    assert radiation_run.step_rate_residual() < 1e-6


def test_absorbing_intensity_matches_hitting_density():
    sol = pde.solve(BASE, None, "absorbing", pde.PdeGrid(t_max=5.0))
    ts = sol.term_structure([1.0, 2.0, 3.0, 4.0, 5.0])
    np.testing.assert_allclose(ts.intensity, first_passage_density(ts.tenors, 1.0, -0.1, 0.5),
                               rtol=1e-4)
    assert sol.balance_residual() < 1e-10


@pytest.mark.parametrize("kc", [0.01, 0.04])
def test_gaussian_killing_within_second_order_bound(kc):
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    sol = pde.solve(params, KillingMeasure.gaussian(kc, 0.3), grid=pde.PdeGrid(t_max=5.0))
    ts = sol.term_structure([1.0, 2.0, 5.0])
    approx = gaussian_pd(ts.tenors, 1.0, kc, 0.09)
    assert np.all(np.abs(ts.pd - approx) <= (kc * ts.tenors) ** 2)
    assert sol.balance_residual() < 1e-10


def test_narrow_gaussian_layer_approaches_radiation():
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    grid = pde.PdeGrid(t_max=5.0, nx=4000)
    ts = pde.solve(params, KillingMeasure.gaussian(0.2, 0.01), grid=grid).term_structure([5.0])
    exact = ebc_pd_sharp(5.0, ContactParams(1.0, 0.0, 0.5, 0.2))
    assert ts.pd[0] == pytest.approx(exact, rel=0.02)


def test_grid_convergence_is_second_order():
    kill = KillingMeasure.dirac(0.3)
    exact = ebc_pd_sharp(2.0, ContactParams(1.0, -0.1, 0.5, 0.3))
    errs = []
    for nx, dt in ((200, 0.02), (400, 0.01), (800, 0.005)):
        g = pde.PdeGrid(t_max=2.0, nx=nx, dt=dt, stretch=0.0)
        errs.append(abs(pde.solve(BASE, kill, grid=g).term_structure([2.0]).pd[0] - exact))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.0 < r < 5.0 for r in ratios), ratios


def test_leak_raises_resolution_error():
    # the minimal extent leaves ~1e-4 of mass in the outer 5%
    params = ModelParams.from_drift(1.0, 0.0, 1.0)
    need = pde.PdeGrid.required_extent(params, 10.0)
    with pytest.raises(pde.ResolutionError):
        pde.solve(params, None, "reflecting", pde.PdeGrid(t_max=10.0, x_max=need))


def test_short_tenors_rejected(radiation_run):
    with pytest.raises(DomainError):
        radiation_run.term_structure([0.005])
    with pytest.raises(DomainError):
        radiation_run.term_structure([11.0])


def test_off_grid_tenor_interpolates(radiation_run):
    a = radiation_run.term_structure([2.0, 2.5, 3.0]).pd
    b = radiation_run.term_structure([2.0005]).pd[0]
    assert a[0] < a[1] < a[2]
    assert a[0] <= b <= a[0] + 1e-4


def test_snapshot_csv(tmp_path):
    sol = pde.solve(BASE, KillingMeasure.dirac(0.3), grid=pde.PdeGrid(t_max=1.0, nx=200),
                    snapshot_times=[0.5, 1.0])
    assert sol.snapshots.shape == (2, 200)
    path = tmp_path / "snap.csv"
    sol.snapshot_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,x,p" and len(rows) == 401
    w = np.diff(sol.x)
    mass = np.sum(0.5 * w * (sol.snapshots[-1][1:] + sol.snapshots[-1][:-1]))
    assert mass == pytest.approx(sol.mass[-1], abs=1e-12)


@pytest.mark.parametrize("kw", [dict(t_max=0.0), dict(t_max=1.0, nx=100), dict(t_max=1.0, dt=0.0),
                                dict(t_max=1.0, theta=0.3), dict(t_max=1.0, stretch=-1.0)])
def test_grid_validation(kw):
    with pytest.raises(DomainError):
        pde.PdeGrid(**kw)


def test_solve_validation():
    with pytest.raises(DomainError):
        pde.solve(BASE, None, "sticky")
    with pytest.raises(DomainError):
        pde.solve(BASE, None, "radiation", kc=-1.0)
    with pytest.raises(DomainError):
        pde.solve(BASE, None, "reflecting", pde.PdeGrid(t_max=10.0, x_max=2.0))


def test_grid_places_node_on_start():
    x = pde.make_grid_nodes(BASE, pde.PdeGrid(t_max=3.0))
    assert np.any(x == 1.0)
    assert x[0] == 0.0 and np.all(np.diff(x) > 0)
