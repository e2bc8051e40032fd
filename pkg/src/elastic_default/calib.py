"""Calibration of model curves to cumulative-default data by random search.

Parameters live in tilde units (``sigma = 1``), where they are identifiable
from a PD curve. Each trial resamples every parameter uniformly in
``[z q, z / q]`` around the incumbent and is accepted only if the RMS
deviation strictly drops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .contact import ContactParams, ebc_pd_sharp
from .model import DefaultCurve, DomainError, FitResult
from .perturb import gaussian_pd

MODEL_PARAMS = {
    "ebc": ("x0t", "kct", "at"),
    "gauss": ("x0t", "kct", "tau"),
}
MODEL_KINDS = {"ebc": "EBC", "gauss": "GaussianKilling"}
DEGENERATE_KCT = 1e-4
DEGENERATE_PD = 1e-10

# coarse pre-scan grids (10 values each)
_SCAN = {
    "x0t": np.geomspace(0.01, 5.0, 10),
    "kct": np.geomspace(0.003, 1.0, 10),
    "tau": np.geomspace(0.003, 3.0, 10),
    "at": np.array([-0.5, -0.2, -0.1, -0.04, 0.04, 0.1, 0.2, 0.3, 0.4, 0.6]),
}


def _normalize_kind(kind: str) -> str:
    k = kind.lower()
    if k in ("ebc",):
        return "ebc"
    if k in ("gauss", "gaussian", "gaussiankilling"):
        return "gauss"
    raise DomainError(f"unknown model kind {kind!r}; expected 'ebc' or 'gauss'")


def model_curve(kind: str, params: Mapping[str, float]) -> Callable:
    """Tenor -> cumulative PD for a model in tilde units."""
    kind = _normalize_kind(kind)
    if kind == "ebc":
        p = ContactParams.from_tilde(params["x0t"], params["kct"], params["at"])
        return lambda t: ebc_pd_sharp(np.asarray(t, dtype=float), p)
    x0t, kct, tau = params["x0t"], params["kct"], params["tau"]
    if x0t < 0 or kct < 0 or tau < 0:
        raise DomainError("x0t, kct and tau must be non-negative")
    return lambda t: gaussian_pd(np.asarray(t, dtype=float), x0t, kct, tau)


def rmsd(curve: Callable, data: DefaultCurve) -> float:
    """Root-mean-square deviation between ``curve(t_i)`` and the observed PDs."""
    if len(data) == 0:
        raise DomainError("data curve is empty")
    diff = np.asarray(curve(data.tenors), dtype=float) - data.pd
    return float(math.sqrt(np.mean(diff * diff)))


@dataclass(frozen=True)
class SearchConfig:
    """Random-search settings; ``bounds`` maps names to ``(lo, hi)``."""

    q: float = 0.9
    n_trials: int = 10_000
    seed: int = 0
    bounds: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise DomainError(f"q must lie in (0, 1), got {self.q}")
        if self.n_trials < 0:
            raise DomainError(f"n_trials must be >= 0, got {self.n_trials}")


def _in_bounds(vec, names, bounds):
    for v, n in zip(vec, names):
        lo, hi = bounds.get(n, (-math.inf, math.inf))
        if not lo <= v <= hi:
            return False
    return True


def random_search(objective: Callable[[Mapping[str, float]], float],
                  init_params: Mapping[str, float], cfg: SearchConfig = SearchConfig(),
                  model_kind: str = "custom") -> FitResult:
    """Minimise ``objective`` by multiplicative uniform random search.

    Proposals with a non-finite objective or outside ``cfg.bounds`` are
    rejected; the former are counted in ``n_rejected_nonfinite``. The trace
    starts with the initial point (trial 0) followed by every accepted trial.
    """
    names = list(init_params)
    best = np.array([float(init_params[n]) for n in names])
    rho = float(objective(dict(zip(names, best))))
    if not math.isfinite(rho):
        raise DomainError("objective is not finite at the initial parameters")
    rng = np.random.default_rng(cfg.seed)
    trace = [(0, tuple(best), rho)]
    n_bad = 0
    q = cfg.q
    for trial in range(1, cfg.n_trials + 1):
        u = rng.random(best.size)
        lo = np.minimum(best * q, best / q)
        hi = np.maximum(best * q, best / q)
        prop = lo + u * (hi - lo)
        if not _in_bounds(prop, names, cfg.bounds):
            continue
        val = objective(dict(zip(names, prop)))
        if not math.isfinite(val):
            n_bad += 1
            continue
        if val < rho:
            best, rho = prop, float(val)
            trace.append((trial, tuple(best), rho))
    return FitResult(
        model_kind=model_kind,
        params=dict(zip(names, best.tolist())),
        objective=rho,
        trace=trace,
        initial_params=dict(init_params),
        n_rejected_nonfinite=n_bad,
    )


def _objective(kind, data):
    def f(params):
        try:
            return rmsd(model_curve(kind, params), data)
        except (DomainError, FloatingPointError, ValueError):
            return math.nan
    return f


def grid_scan(kind: str, data: DefaultCurve) -> dict:
    """Best point of a deterministic 10x10x10 scan; replaces a manual pre-fit."""
    kind = _normalize_kind(kind)
    names = MODEL_PARAMS[kind]
    obj = _objective(kind, data)
    best, best_rho = None, math.inf
    for v0 in _SCAN[names[0]]:
        for v1 in _SCAN[names[1]]:
            for v2 in _SCAN[names[2]]:
                p = {names[0]: float(v0), names[1]: float(v1), names[2]: float(v2)}
                r = obj(p)
                if r < best_rho:
                    best, best_rho = p, r
    return best


def fit(model_kind: str, data: DefaultCurve, cfg: SearchConfig = SearchConfig(),
        init_params: Optional[Mapping[str, float]] = None) -> FitResult:
    """Fit the EBC (``x0t, kct, at``; ``delta = 0``) or Gaussian-layer
    (``x0t, kct, tau``) model to ``data``, wall at ``xm = 0``.

    The start point is ``init_params`` if given, else the grid-scan optimum.
    ``degenerate`` is set when the fit carries no default signal: ``kct``
    below ``1e-4`` or a fitted curve that stays below ``1e-10`` everywhere.
    Zero data usually ends the second way, since pushing ``x0t`` outwards
    reaches ``rho = 0`` exactly and no further trial can improve on it.
    """
    if len(data) == 0:
        raise DomainError("cannot fit an empty data curve")
    kind = _normalize_kind(model_kind)
    init = dict(init_params) if init_params is not None else grid_scan(kind, data)
    missing = set(MODEL_PARAMS[kind]) - set(init)
    if missing:
        raise DomainError(f"missing initial parameters: {sorted(missing)}")
    init = {n: float(init[n]) for n in MODEL_PARAMS[kind]}
    res = random_search(_objective(kind, data), init, cfg, MODEL_KINDS[kind])
    fitted = np.asarray(model_curve(kind, res.params)(data.tenors), dtype=float)
    degenerate = bool(res.params["kct"] < DEGENERATE_KCT or np.max(fitted) < DEGENERATE_PD)
    return FitResult(res.model_kind, res.params, res.objective, res.trace,
                     res.initial_params, res.n_rejected_nonfinite, degenerate)


def synthetic_curve(kind: str, params: Mapping[str, float], tenors=None,
                    label: str = "synthetic") -> DefaultCurve:
    """Noise-free data curve generated by a model (default tenors 1..30 years)."""
    t = np.arange(1.0, 31.0) if tenors is None else np.asarray(tenors, dtype=float)
    return DefaultCurve(label, t, np.asarray(model_curve(kind, params)(t), dtype=float))


# fitted parameters of the ten rating buckets (tilde units, wall at 0)
BUCKETS = {
    ("gauss", "CCC/C"): {"x0t": 0.01, "kct": 0.20, "tau": 0.00},
    ("ebc", "CCC/C"): {"x0t": 0.24, "kct": 0.42, "at": 0.34},
    ("gauss", "B"): {"x0t": 0.05, "kct": 0.12, "tau": 0.01},
    ("ebc", "B"): {"x0t": 1.15, "kct": 0.29, "at": 0.35},
    ("gauss", "BB"): {"x0t": 0.97, "kct": 0.10, "tau": 0.09},
    ("ebc", "BB"): {"x0t": 1.85, "kct": 0.18, "at": 0.32},
    ("gauss", "BBB"): {"x0t": 2.35, "kct": 0.06, "tau": 0.63},
    ("ebc", "BBB"): {"x0t": 2.46, "kct": 0.05, "at": 0.38},
    ("gauss", "A"): {"x0t": 3.38, "kct": 0.04, "tau": 0.77},
    ("ebc", "A"): {"x0t": 3.34, "kct": 0.03, "at": 0.21},
}


def bucket_params(kind: str, label: str, convention: str = "library") -> dict:
    """Fitted bucket parameters, optionally converted to this library's normalization.

    The Gaussian-layer rows are quoted with the closed-form prefactor
    ``kct / sqrt(pi/2)``, i.e. half of :func:`~elastic_default.perturb.gaussian_pd`.
    With ``convention="library"`` their ``kct`` is halved so that
    ``gaussian_pd`` reproduces the same curve; ``"quoted"`` returns the
    numbers as listed.
    """
    kind = _normalize_kind(kind)
    if convention not in ("library", "quoted"):
        raise DomainError(f"unknown convention {convention!r}")
    try:
        p = dict(BUCKETS[(kind, label)])
    except KeyError:
        raise DomainError(f"no tabulated parameters for {kind!r} bucket {label!r}") from None
    if kind == "gauss" and convention == "library":
        p["kct"] = 0.5 * p["kct"]
    return p
