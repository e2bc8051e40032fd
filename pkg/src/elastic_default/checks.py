"""Cross-validation checks shared by ``elastic-default validate`` and the test suite.

Each check compares two independent routes (closed form, PDE, Monte Carlo,
quadrature) and returns a :class:`CheckResult` with the worst-case metric
and the threshold it is held to.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional

import numpy as np
from scipy import integrate

from . import calib, contact, greens, mc, pde, perturb
from .model import KillingMeasure, ModelParams, curve_from_pd

# (x0t, kct, at): the five EBC buckets plus five tuples filling the same box
TRIANGLE_TUPLES = (
    (0.24, 0.42, 0.34),
    (1.15, 0.29, 0.35),
    (1.85, 0.18, 0.32),
    (2.46, 0.05, 0.38),
    (3.34, 0.03, 0.21),
    (1.00, 0.30, -0.10),
    (3.00, 0.10, -0.30),
    (0.50, 0.15, 0.00),
    (2.00, 0.42, -0.20),
    (3.38, 0.06, 0.10),
)


@dataclass
class CheckOptions:
    """Knobs for :func:`run_checks`.

    ``skip`` may contain ``"mc"`` (drops the Monte Carlo parts) or criterion
    numbers. ``coarse_pde`` replaces the reference grid by a deliberately
    poor one, which must make the PDE comparison fail.
    """

    skip: frozenset = frozenset()
    coarse_pde: bool = False
    mc_paths: int = 1_000_000
    seed: int = 20240601

    def pde_grid(self, t_max: float) -> pde.PdeGrid:
        if self.coarse_pde:
            return pde.PdeGrid(t_max=t_max, nx=200, dt=0.05, stretch=0.0)
        return pde.PdeGrid(t_max=t_max)


@dataclass
class CheckResult:
    criterion: int
    name: str
    status: str
    metrics: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        head = {"pass": "PASS", "fail": "FAIL", "skip": "SKIP"}[self.status]
        summary = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items()
                            if not isinstance(v, (dict, list)))
        return f"[{head}] criterion {self.criterion} ({self.name}): {summary}"

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "status": self.status,
                "seconds": round(self.seconds, 3), "metrics": _jsonable(self.metrics)}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _result(criterion, name, ok, metrics, t0):
    return CheckResult(criterion, name, "pass" if ok else "fail", metrics,
                       time.perf_counter() - t0)


# --- 1: closed form vs PDE vs MC, contact killing ---------------------------

def triangle(opts: CheckOptions = CheckOptions(), tuples=TRIANGLE_TUPLES,
             t_max: float = 30.0) -> CheckResult:
    t0 = time.perf_counter()
    use_mc = "mc" not in opts.skip
    worst_rel = 0.0
    n_in = n_tot = 0
    per_tuple = []
    for x0t, kct, at in tuples:
        params = ModelParams.from_drift(1.0, at, x0t)
        cp = contact.ContactParams.from_tilde(x0t, kct, at)
        grid = opts.pde_grid(t_max)
        sol = pde.solve(params, KillingMeasure.dirac(kct), grid=grid)
        t_pde = np.linspace(max(0.1, 10.0 * grid.dt), t_max, 300)
        ts = sol.term_structure(t_pde)
        exact = contact.ebc_pd_sharp(t_pde, cp)
        mask = exact > 1e-4
        rel = float(np.max(np.abs(ts.pd[mask] - exact[mask]) / exact[mask])) if mask.any() else 0.0
        worst_rel = max(worst_rel, rel)
        row = {"x0t": x0t, "kct": kct, "at": at, "pde_rel": rel}
        if use_mc:
            tenors = np.arange(1.0, t_max + 1.0)
            cfg = mc.McConfig(n_paths=opts.mc_paths, dt=0.5, t_max=t_max, seed=opts.seed)
            sim = mc.simulate(params, KillingMeasure.dirac(kct), cfg=cfg, tenors=tenors)
            ex = contact.ebc_pd_sharp(tenors, cp)
            se = np.maximum(sim.stderr, np.sqrt(ex * (1.0 - ex) / opts.mc_paths))
            inside = np.abs(sim.pd - ex) <= 3.0 * se
            n_in += int(inside.sum())
            n_tot += inside.size
            row["mc_inside"] = int(inside.sum())
        per_tuple.append(row)
    frac = n_in / n_tot if n_tot else float("nan")
    seconds = time.perf_counter() - t0
    ok = worst_rel < 1e-3 and seconds < 300.0
    metrics = {"pde_max_rel": worst_rel}
    if use_mc:
        ok = ok and frac >= 0.95
        metrics["mc_fraction_within_3se"] = frac
    else:
        metrics["mc"] = "skipped"
    metrics["runtime_s"] = seconds
    metrics["tuples"] = per_tuple
    return _result(1, "closed form / PDE / MC, contact killing", ok, metrics, t0)


# --- 2, 3: strong-killing limits ------------------------------------------

def first_passage_limit() -> CheckResult:
    t0 = time.perf_counter()
    t = np.linspace(0.1, 30.0, 600)
    D = 0.5
    kc = 100.0  # 100 sigma with sigma = 1
    worst = shifted = 0.0
    for x0 in (0.24, 1.0, 3.38):
        for a in (-0.3, 0.0, 0.21):
            p = contact.ebc_pd_sharp(t, contact.ContactParams(x0, a, D, kc))
            worst = max(worst, float(np.max(np.abs(p - contact.first_passage_pd(t, x0, a, D)))))
            # diagnostic: a radiation wall acts like an absorbing one moved back by D/kc
            p_fp = contact.first_passage_pd(t, x0 + D / kc, a, D)
            shifted = max(shifted, float(np.max(np.abs(p - p_fp))))
    worst_cg = 0.0
    for x0 in (0.24, 1.0, 3.38):
        p = contact.ebc_pd_sharp(t, contact.ContactParams(x0, -D, D, kc))
        worst_cg = max(worst_cg, float(np.max(np.abs(p - contact.creditgrades_pd(t, x0, 1.0)))))
    ok = worst < 1e-3 and worst_cg < 1e-3
    return _result(2, "first-passage and CreditGrades limits", ok,
                   {"max_abs_first_passage": worst, "max_abs_creditgrades": worst_cg,
                    "max_abs_vs_wall_shifted_by_D_over_kc": shifted}, t0)


def hitting_density_limit(kc: float = 1e5) -> CheckResult:
    t0 = time.perf_counter()
    t = np.linspace(0.1, 10.0, 400)
    worst = 0.0
    for x0, a in ((1.0, -0.1), (0.24, 0.34), (3.34, 0.21), (2.0, -0.5)):
        lam = contact.ebc_intensity_sharp(t, contact.ContactParams(x0, a, 0.5, kc))
        ref = contact.first_passage_density(t, x0, a, 0.5)
        worst = max(worst, float(np.max(np.abs(lam - ref) / ref)))
    return _result(3, "hitting-density limit of the intensity", worst < 1e-3,
                   {"kc": kc, "max_rel": worst}, t0)


# --- 4: weak killing --------------------------------------------------------

# Gaussian layers shaped like the 'A' and 'BBB' buckets, a = 0
WEAK_CASES = ((3.38, 0.04, math.sqrt(0.77), 1.25), (2.35, 0.06, math.sqrt(0.63), 0.8333))


def _weak_errors(x0, kc, width, t, grid):
    params = ModelParams.from_drift(1.0, 0.0, x0)
    k = KillingMeasure.gaussian(kc, width)
    sol = pde.solve(params, k, "reflecting", grid)
    lam = float(sol.bulk_rate[-1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lam1 = perturb.first_order_intensity(t, k, perturb.analytic_p0(params))
        res = perturb.neumann_green(k, params, t, 1,
                                    perturb.QuadratureSpec.covering(params, t, nx=801, nt=64))
    lam2 = res.intensity(k, 2)
    return abs(lam1 - lam) / lam, abs(lam2 - lam) / lam


def weak_killing(opts: CheckOptions = CheckOptions()) -> CheckResult:
    t0 = time.perf_counter()
    e1_max = 0.0
    reduced = True
    for x0, kc, width, t_end in WEAK_CASES:
        for frac in (0.25, 0.5, 1.0):
            t = frac * t_end
            grid = opts.pde_grid(t)
            grid = pde.PdeGrid(t_max=t, nx=grid.nx, dt=min(grid.dt, t / 50.0),
                               stretch=grid.stretch)
            e1, e2 = _weak_errors(x0, kc, width, t, grid)
            e1_max = max(e1_max, e1)
            reduced = reduced and e2 < e1
    # scaling at fixed t: double kc twice on a fine grid
    x0, _, width, t = WEAK_CASES[1]
    fine = opts.pde_grid(t)
    fine = pde.PdeGrid(t_max=t, nx=2 * fine.nx, dt=0.5 * fine.dt, stretch=fine.stretch)
    kcs = (0.015, 0.03)
    errs = [_weak_errors(x0, kc, width, t, fine) for kc in kcs]
    slope1 = math.log(errs[1][0] / errs[0][0]) / math.log(2.0)
    slope2 = math.log(errs[1][1] / errs[0][1]) / math.log(2.0)
    ok = e1_max <= 0.02 and reduced and abs(slope1 - 1.0) < 0.25 and abs(slope2 - 2.0) < 0.5
    return _result(4, "weak-killing perturbation vs PDE", ok,
                   {"first_order_max_rel": e1_max, "second_order_reduces": reduced,
                    "slope_order1": slope1, "slope_order2": slope2}, t0)


# --- 5: static limit --------------------------------------------------------

def static_limit(opts: CheckOptions = CheckOptions(), n_paths: int = 100_000) -> CheckResult:
    t0 = time.perf_counter()
    k0, x0 = 0.5, 1.0
    killing = KillingMeasure.tabulated([0.0, 10.0], [k0, k0])
    t = np.linspace(0.0, 5.0, 51)
    closed = perturb.static_intensity(t, killing, x0)
    closed_err = float(np.max(np.abs(closed - k0 * np.exp(-k0 * t))))
    metrics = {"closed_form_max_abs": closed_err}
    ok = closed_err < 1e-12
    if "mc" in opts.skip:
        metrics["mc"] = "skipped"
    else:
        params = ModelParams.from_drift(1e-9, 0.0, x0)
        tenors = np.arange(1.0, 6.0)
        cfg = mc.McConfig(n_paths=n_paths, dt=0.05, t_max=5.0, seed=opts.seed)
        sim = mc.simulate(params, killing, cfg=cfg, tenors=tenors)
        z = float(np.max(np.abs(sim.survival - np.exp(-k0 * tenors)) / sim.stderr))
        metrics["mc_max_z"] = z
        ok = ok and z < 3.0
    return _result(5, "static limit", ok, metrics, t0)


# --- 6: EBC vs Gaussian 'A' -----------------------------------------------

def ebc_gauss_convergence() -> CheckResult:
    t0 = time.perf_counter()
    t = np.linspace(1.0, 30.0, 291)
    pe = calib.model_curve("ebc", calib.bucket_params("ebc", "A"))(t)
    pg = calib.model_curve("gauss", calib.bucket_params("gauss", "A"))(t)
    gap = float(np.max(np.abs(pe - pg)))
    pg_q = calib.model_curve("gauss", calib.bucket_params("gauss", "A", "quoted"))(t)
    gap_q = float(np.max(np.abs(pe - pg_q)))
    return _result(6, "EBC vs Gaussian 'A' curves", gap < 0.005,
                   {"max_abs_gap": gap, "max_abs_gap_quoted_kct": gap_q,
                    "pd30_ebc": float(pe[-1]), "pd30_gauss": float(pg[-1])}, t0)


# --- 7: normalization -------------------------------------------------------

def normalization(x0t=2.35, kct=0.06, tau=0.63) -> CheckResult:
    t0 = time.perf_counter()
    D = 0.5

    def lam(u):
        return perturb.gaussian_intensity(u, x0t, 0.0, D, kct, Delta=math.sqrt(2.0 * D * tau))

    worst_int = 0.0
    worst_half = 0.0
    for t in (0.5, 1.0, 5.0, 10.0, 30.0):
        q, _ = integrate.quad(lam, 0.0, t, epsabs=1e-14, epsrel=1e-13, limit=200)
        worst_int = max(worst_int, abs(q - perturb.gaussian_pd(t, x0t, kct, tau)))
        h = 1e-4 * t
        deriv = (perturb.gaussian_pd_literal(t + h, x0t, kct, tau)
                 - perturb.gaussian_pd_literal(t - h, x0t, kct, tau)) / (2.0 * h)
        worst_half = max(worst_half, abs(deriv / lam(t) - 0.5))
    ok = worst_int < 1e-8 and worst_half < 1e-6
    return _result(7, "Gaussian-layer normalization", ok,
                   {"integral_max_abs": worst_int, "literal_ratio_minus_half": worst_half}, t0)


# --- 8: identities ----------------------------------------------------------

def identities(opts: CheckOptions = CheckOptions()) -> CheckResult:
    t0 = time.perf_counter()
    cases = (
        ("radiation", ModelParams.from_drift(1.0, -0.1, 1.0), KillingMeasure.dirac(0.3), 10.0),
        ("gaussian", ModelParams.from_drift(1.0, 0.0, 2.35), KillingMeasure.gaussian(0.06, 0.8), 10.0),
        ("absorbing", ModelParams.from_drift(1.0, 0.2, 1.5), None, 5.0),
        ("fuzzy", ModelParams.from_drift(1.0, 0.1, 1.0, delta=0.4), KillingMeasure.dirac(0.2), 5.0),
        ("reflecting", ModelParams.from_drift(1.0, -0.1, 1.0), None, 5.0),
    )
    id_err = rate_err = 0.0
    mass_err = None
    for name, params, killing, t_max in cases:
        boundary = "absorbing" if name == "absorbing" else "reflecting"
        sol = pde.solve(params, killing, boundary, opts.pde_grid(t_max))
        ts = sol.term_structure(np.linspace(0.5, t_max, 20))
        id_err = max(id_err, float(np.max(np.abs(ts.survival - np.exp(-ts.cum_hazard)))),
                     float(np.max(np.abs(ts.intensity - ts.hazard * ts.survival))))
        rate_err = max(rate_err, sol.step_rate_residual())
        if name == "reflecting":
            mass_err = float(np.max(np.abs(sol.mass - 1.0)))
    fd = curve_from_pd(np.arange(1.0, 31.0), 1.0 - np.exp(-0.03 * np.arange(1.0, 31.0)))
    id_err = max(id_err, float(np.max(np.abs(fd.survival - np.exp(-fd.cum_hazard)))),
                 float(np.max(np.abs(fd.intensity - fd.hazard * fd.survival))))
    ok = id_err < 1e-12 and rate_err < 1e-6 and mass_err < 1e-10
    return _result(8, "term-structure identities and PDE balance", ok,
                   {"identity_max_abs": id_err, "step_rate_max_abs": rate_err,
                    "reflecting_mass_max_abs": mass_err}, t0)


# --- 9: calibration round trips ---------------------------------------------

def _recovery_error(name, true, got):
    if true == 0.0:
        # a zero cannot be hit by multiplicative steps; require "small"
        return 0.0 if abs(got) < 0.005 else math.inf
    return abs(got / true - 1.0)


def calibration_roundtrip(labels: Optional[Iterable] = None, seed: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    labels = list(labels) if labels is not None else list(calib.BUCKETS)
    rows = []
    ok = True
    for kind, label in labels:
        truth = calib.bucket_params(kind, label)
        data = calib.synthetic_curve(kind, truth)
        f0 = time.perf_counter()
        res = calib.fit(kind, data, calib.SearchConfig(seed=seed))
        secs = time.perf_counter() - f0
        rhos = [r for _, _, r in res.trace]
        strict = all(b < a for a, b in zip(rhos, rhos[1:]))
        errs = {n: _recovery_error(n, truth[n], res.params[n]) for n in truth}
        worst = max(errs.values())
        good = worst < 0.05 and strict and secs < 60.0
        ok = ok and good
        rows.append({"model": kind, "bucket": label, "worst_rel": worst,
                     "errors": errs, "rho": res.objective, "strict": strict,
                     "seconds": secs, "pass": good})
    n_pass = sum(r["pass"] for r in rows)
    return _result(9, "calibration round trips", ok,
                   {"columns_recovered": f"{n_pass}/{len(rows)}",
                    "worst_rel": max(r["worst_rel"] for r in rows), "fits": rows}, t0)


# --- 10: Laplace transform --------------------------------------------------

def numerical_laplace(f: Callable[[float], float], s: float) -> float:
    """``int_0^inf exp(-s t) f(t) dt`` by adaptive quadrature, split at t = 1."""
    g = lambda t: math.exp(-s * t) * f(t)
    lo, _ = integrate.quad(g, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=400)
    hi, _ = integrate.quad(g, 1.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return lo + hi


def laplace_crosscheck(n: int = 20, seed: int = 7) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a = rng.uniform(-0.4, 0.4)
        D = rng.uniform(0.2, 1.0)
        kc = rng.uniform(0.0, 1.5)
        x, y = rng.uniform(0.0, 2.0, 2)
        s = rng.uniform(0.3, 3.0)
        closed = greens.g_contact_laplace(x, y, s, a, D, kc)
        numeric = numerical_laplace(lambda t: greens.g_contact_time(x, y, t, a, D, kc), s)
        worst = max(worst, abs(closed - numeric))
    return _result(10, "Laplace-domain contact Green function", worst < 1e-7,
                   {"tuples": n, "max_abs": worst}, t0)


CHECKS = {
    1: triangle, 2: first_passage_limit, 3: hitting_density_limit, 4: weak_killing,
    5: static_limit, 6: ebc_gauss_convergence, 7: normalization, 8: identities,
    9: calibration_roundtrip, 10: laplace_crosscheck,
}
_TAKES_OPTS = {1, 4, 5, 8}


def run_check(number: int, opts: CheckOptions = CheckOptions()) -> CheckResult:
    fn = CHECKS[number]
    return fn(opts) if number in _TAKES_OPTS else fn()


def run_checks(opts: CheckOptions = CheckOptions(), numbers=None, report=None):
    """Run the selected checks in order; ``report`` is called with each result."""
    out = []
    for n in (numbers or sorted(CHECKS)):
        if n in opts.skip or str(n) in opts.skip:
            res = CheckResult(n, CHECKS[n].__name__, "skip")
        else:
            res = run_check(n, opts)
        if report is not None:
            report(res)
        out.append(res)
    return out
