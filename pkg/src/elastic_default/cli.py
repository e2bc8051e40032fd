"""Command-line interface: ``elastic-default {curve,fit,validate,sweep}``.

Exit codes: 0 success, 1 a validation check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import calib, checks
from .contact import ContactParams, ebc_term_structure
from .io import CsvFormatError, read_default_curve, read_keyvalue, \
    write_default_curve, write_fit, write_term_structure
from .model import DefaultCurve, DomainError, TermStructure
from .perturb import gaussian_intensity, gaussian_pd

MAX_SWEEP_ROWS = 1_000_000

# tilde flag -> physical flag used together with --sigma
PHYSICAL = {"x0t": "x0", "kct": "kc", "at": "a", "deltat": "delta"}
DEFAULTS = {"x0t": 1.0, "kct": 0.1, "at": 0.0, "tau": 0.5, "deltat": 0.0}


class UsageError(Exception):
    """Invalid user input; reported with exit code 2."""


def parse_range(text: str, name: str = "tenors") -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma list of numbers."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if not step > 0 or stop < start:
                raise UsageError(f"invalid --{name} {text!r}: need step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            if n > MAX_SWEEP_ROWS:
                raise UsageError(f"--{name} {text!r} has too many points")
            return start + step * np.arange(n)
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise UsageError(f"invalid --{name} {text!r}: expected start:stop:step or a comma list") \
            from None


def _config(args) -> dict:
    return read_keyvalue(args.config) if getattr(args, "config", None) else {}


def _model_kind(args, cfg) -> str:
    kind = str(cfg.get("model", args.model)).lower()
    if kind not in ("ebc", "gauss"):
        raise UsageError(f"invalid --model {kind!r}: expected ebc or gauss")
    return kind


def _tilde_params(args, cfg, kind) -> dict:
    """Collect tilde parameters: flag < physical flag / sigma < config file."""
    names = list(calib.MODEL_PARAMS[kind]) + (["deltat"] if kind == "ebc" else [])
    sigma = cfg.get("sigma", args.sigma)
    if sigma is not None and not float(sigma) > 0:
        raise UsageError(f"invalid --sigma {sigma!r}: must be positive")
    out = {}
    for n in names:
        v = getattr(args, n)
        phys = PHYSICAL.get(n)
        pv = cfg.get(phys, getattr(args, phys, None)) if phys else None
        if pv is not None:
            if sigma is None:
                raise UsageError(f"--{phys} needs --sigma")
            v = float(pv) / float(sigma)
        if n in cfg:
            v = cfg[n]
        if v is None:
            v = DEFAULTS[n]
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise UsageError(f"invalid --{n} {v!r}: not a number") from None
        if not math.isfinite(v):
            raise UsageError(f"invalid --{n}: must be finite")
        if n != "at" and v < 0:
            raise UsageError(f"invalid --{n} {v!r}: must be >= 0")
        out[n] = v
    return out


def model_term_structure(kind: str, p: dict, tenors) -> TermStructure:
    """Closed-form term structure with analytic intensity."""
    t = np.asarray(tenors, dtype=float)
    if t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise UsageError("tenors must be non-negative and strictly increasing")
    if kind == "ebc":
        cp = ContactParams.from_tilde(p["x0t"], p["kct"], p["at"], p.get("deltat", 0.0))
        ts = ebc_term_structure(t, cp)
    else:
        pd = np.atleast_1d(gaussian_pd(t, p["x0t"], p["kct"], p["tau"]))
        if np.any(pd >= 1.0):
            raise DomainError(f"P reaches 1 by t={t[pd >= 1][0]:g}; shorten the tenors")
        lam = np.atleast_1d(gaussian_intensity(t, p["x0t"], 0.0, 0.5, p["kct"],
                                               Delta=math.sqrt(p["tau"])))
        omega = 1.0 - pd
        ts = TermStructure(t, pd, omega, -np.log1p(-pd), lam / omega, lam)
    if np.any(ts.pd >= 1.0):
        raise DomainError(f"P reaches 1 by t={t[ts.pd >= 1][0]:g}; shorten the tenors")
    return ts


# --- commands ----------------------------------------------------------------

def cmd_curve(args) -> int:
    cfg = _config(args)
    kind = _model_kind(args, cfg)
    p = _tilde_params(args, cfg, kind)
    tenors = parse_range(str(cfg.get("tenors", args.tenors)))
    ts = model_term_structure(kind, p, tenors)
    if args.out:
        write_term_structure(ts, args.out)
    else:
        write_term_structure(ts, sys.stdout)
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    kind = _model_kind(args, cfg)
    data = read_default_curve(args.data)
    search = calib.SearchConfig(q=float(cfg.get("q", args.q)),
                                n_trials=int(cfg.get("trials", args.trials)),
                                seed=int(cfg.get("seed", args.seed)))
    prefix = Path(args.out_prefix) if args.out_prefix else Path(args.data).with_suffix("")
    res = calib.fit(kind, data, search)
    params_path = prefix.with_name(prefix.name + ".params")
    trace_path = prefix.with_name(prefix.name + ".trace.csv")
    curve_path = prefix.with_name(prefix.name + ".curve.csv")
    write_fit(res, params_path, trace_path)
    fitted = np.asarray(calib.model_curve(kind, res.params)(data.tenors), dtype=float)
    write_default_curve(DefaultCurve(data.label, data.tenors, fitted), curve_path)
    if search.n_trials == 0:
        print("initial " + " ".join(f"{k}={v!r}" for k, v in res.initial_params.items()))
    print(" ".join(f"{k}={v!r}" for k, v in res.params.items()))
    print(f"rho={res.objective!r}")
    if res.degenerate:
        print("warning: degenerate fit (no default signal)", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    skip = set()
    for item in args.skip or []:
        skip.update(s.strip() for s in item.split(",") if s.strip())
    numbers = None
    if args.only:
        numbers = sorted({int(s) for item in args.only for s in item.split(",") if s.strip()})
    opts = checks.CheckOptions(skip=frozenset(skip), coarse_pde=args.coarse_pde,
                               mc_paths=args.mc_paths, seed=args.seed)
    results = checks.run_checks(opts, numbers,
                                report=lambda r: print(r.line(), file=sys.stderr, flush=True))
    report = {"passed": all(r.passed for r in results),
              "checks": [r.as_dict() for r in results]}
    text = json.dumps(report, indent=2, sort_keys=False)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0 if report["passed"] else 1


def cmd_sweep(args) -> int:
    cfg = _config(args)
    kind = _model_kind(args, cfg)
    names = list(calib.MODEL_PARAMS[kind])
    axes = []
    for n in names:
        raw = cfg.get(n, getattr(args, n))
        vals = parse_range(str(raw), n) if raw is not None else np.array([DEFAULTS[n]])
        if vals.size == 0:
            raise UsageError(f"invalid --{n}: empty range")
        if n != "at" and np.any(vals < 0):
            raise UsageError(f"invalid --{n}: values must be >= 0")
        axes.append(vals)
    tenors = parse_range(str(cfg.get("tenors", args.tenors)))
    n_rows = tenors.size * int(np.prod([a.size for a in axes]))
    if n_rows > MAX_SWEEP_ROWS:
        raise UsageError(f"sweep would produce {n_rows} rows (limit {MAX_SWEEP_ROWS})")
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model"] + names + ["tenor_years", "pd"])
        for combo in itertools.product(*axes):
            p = dict(zip(names, map(float, combo)))
            ts = model_term_structure(kind, p, tenors)
            for t, pd in zip(ts.tenors, ts.pd):
                w.writerow([kind] + [repr(p[n]) for n in names] + [repr(float(t)), repr(float(pd))])
    finally:
        if args.out:
            fh.close()
    return 0


# --- parser -------------------------------------------------------------------

def _add_model_flags(p, sweep=False):
    p.add_argument("--model", default="ebc", help="ebc or gauss")
    kw = {"type": str} if sweep else {"type": float}
    p.add_argument("--x0t", default=None, **kw, help="distance to the wall (sigma = 1)")
    p.add_argument("--kct", default=None, **kw, help="killing strength (sigma = 1)")
    p.add_argument("--at", default=None, **kw, help="drift, ebc only (sigma = 1)")
    p.add_argument("--tau", default=None, **kw, help="layer + start spread, gauss only")
    p.add_argument("--tenors", default="1:30:1", help="start:stop:step in years")
    p.add_argument("--config", help="key=value file overriding the flags")
    p.add_argument("--out", help="output CSV (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastic-default",
                                     description="Default-probability term structures with killing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="closed-form term structure")
    _add_model_flags(p)
    p.add_argument("--deltat", type=float, default=None, help="start spread, ebc only")
    p.add_argument("--sigma", type=float, default=None, help="enables the physical flags")
    for name in PHYSICAL.values():
        p.add_argument(f"--{name}", type=float, default=None,
                       help="physical value, divided by --sigma")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("fit", help="calibrate a model to a tenor_years,pd CSV")
    p.add_argument("data")
    p.add_argument("--model", default="ebc")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", default=None,
                   help="writes PREFIX.params, PREFIX.trace.csv, PREFIX.curve.csv")
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", help="run the cross-validation checks")
    p.add_argument("--skip", action="append", help="'mc' and/or criterion numbers")
    p.add_argument("--only", action="append", help="criterion numbers to run")
    p.add_argument("--coarse-pde", action="store_true", help="deliberately coarse PDE grid")
    p.add_argument("--mc-paths", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=checks.CheckOptions.seed)
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="long-format P(t) over a parameter grid")
    _add_model_flags(p, sweep=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CsvFormatError as exc:
        print(f"error: malformed CSV: {exc}", file=sys.stderr)
    except (UsageError, DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
