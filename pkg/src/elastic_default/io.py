"""CSV and key=value serialization for curves, parameters and fit traces."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from .model import DefaultCurve, DomainError, FitResult, TermStructure

TS_COLUMNS = ("tenor_years", "pd", "survival", "cum_hazard", "hazard", "intensity")


class CsvFormatError(DomainError):
    """Malformed CSV input; ``lineno`` is the 1-based offending line."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def _open_text(target, mode):
    if hasattr(target, "write") or hasattr(target, "read"):
        return target, False
    return open(Path(target), mode, encoding="utf-8", newline=""), True


def _fmt(v: float) -> str:
    return repr(float(v))


def write_term_structure(ts: TermStructure, target) -> None:
    """Write a term structure with the full column set (plus stderr if present)."""
    fh, owned = _open_text(target, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(TS_COLUMNS) + (["stderr"] if ts.stderr is not None else [])
        w.writerow(cols)
        arrays = [ts.tenors, ts.pd, ts.survival, ts.cum_hazard, ts.hazard, ts.intensity]
        if ts.stderr is not None:
            arrays.append(ts.stderr)
        for row in zip(*arrays):
            w.writerow([_fmt(v) for v in row])
    finally:
        if owned:
            fh.close()


def term_structure_to_csv(ts: TermStructure) -> str:
    buf = io.StringIO()
    write_term_structure(ts, buf)
    return buf.getvalue()


def _read_rows(target):
    fh, owned = _open_text(target, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if owned:
            fh.close()
    if not rows:
        raise CsvFormatError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"expected {len(header)} fields, got {len(row)}", i)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CsvFormatError(f"non-numeric field in {row!r}", i) from None
        if not all(math.isfinite(v) for v in vals):
            raise CsvFormatError("non-finite value", i)
        body.append((i, vals))
    return header, body


def read_term_structure(target) -> TermStructure:
    header, body = _read_rows(target)
    if tuple(header[: len(TS_COLUMNS)]) != TS_COLUMNS:
        raise CsvFormatError(f"unexpected header {header!r}", 1)
    if not body:
        raise CsvFormatError("no data rows", 2)
    data = np.array([v for _, v in body])
    stderr = data[:, 6] if "stderr" in header else None
    return TermStructure(*(data[:, j] for j in range(6)), stderr=stderr)


def read_default_curve(target, label: str = "") -> DefaultCurve:
    """Read ``tenor_years,pd[,...]`` rows into a :class:`DefaultCurve`.

    Extra columns are ignored, so a full term-structure CSV is also accepted.
    """
    header, body = _read_rows(target)
    if header[:2] != ["tenor_years", "pd"]:
        raise CsvFormatError(f"header must start with tenor_years,pd; got {header!r}", 1)
    if not body:
        raise CsvFormatError("no data rows", 2)
    prev_t, prev_p = -math.inf, 0.0
    for lineno, (t, p, *_) in body:
        if t <= prev_t:
            raise CsvFormatError("tenors must be strictly increasing", lineno)
        if not 0.0 <= p <= 1.0:
            raise CsvFormatError(f"pd {p} outside [0, 1]", lineno)
        if p < prev_p:
            raise CsvFormatError("pd must be non-decreasing", lineno)
        prev_t, prev_p = t, p
    data = np.array([v[:2] for _, v in body])
    if not label:
        label = Path(target).stem if isinstance(target, (str, Path)) else ""
    return DefaultCurve(label, data[:, 0], data[:, 1])


def write_default_curve(curve: DefaultCurve, target) -> None:
    fh, owned = _open_text(target, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tenor_years", "pd"])
        for t, p in zip(curve.tenors, curve.pd):
            w.writerow([_fmt(t), _fmt(p)])
    finally:
        if owned:
            fh.close()


def format_keyvalue(values: Mapping[str, object]) -> str:
    lines = []
    for k, v in values.items():
        if isinstance(v, float):
            v = _fmt(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_keyvalue(text: str) -> dict:
    """Parse flat ``key=value`` lines; ``#`` starts a comment.

    Values that parse as floats are returned as floats, others as strings.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DomainError(f"line {lineno}: empty key")
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def read_keyvalue(path) -> dict:
    return parse_keyvalue(Path(path).read_text(encoding="utf-8"))


def write_keyvalue(values: Mapping[str, object], path) -> None:
    Path(path).write_text(format_keyvalue(values), encoding="utf-8")


def write_fit(result: FitResult, params_path, trace_path) -> None:
    """Serialize a fit: key=value block plus a CSV trace of accepted steps."""
    block = {"model_kind": result.model_kind}
    block.update({k: float(v) for k, v in result.params.items()})
    block["objective"] = float(result.objective)
    block["accepted_steps"] = len(result.trace)
    block["rejected_nonfinite"] = result.n_rejected_nonfinite
    block["degenerate"] = str(bool(result.degenerate)).lower()
    write_keyvalue(block, params_path)
    names = list(result.params)
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial"] + names + ["rho"])
        for trial, vec, rho in result.trace:
            w.writerow([trial] + [_fmt(v) for v in vec] + [_fmt(rho)])
