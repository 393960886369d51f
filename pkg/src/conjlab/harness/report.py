"""Run reports and their JSON/CSV emission.

``report.json`` holds the full report with sorted keys and no timings, so
two runs of the same configuration produce byte-identical files; timings go
to ``timings.json``.  CSV files:

* ``residuals.csv``: one row per verification sample, columns
  ``s, t, conj_H, conj_G, G_of_H, H_of_G`` (start time, evaluation time and
  the four residuals at that sample).
* ``exponents.csv``: running exponent estimates, columns ``step, lambda_1 ..
  lambda_d``.
* ``sigma.json``: the cut-off radius table of a localization run.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

RESIDUAL_COLUMNS = ("s", "t", "conj_H", "conj_G", "G_of_H", "H_of_G")


def sanitize(obj):
    """Plain JSON types: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return sanitize(obj.to_dict())
    return str(obj)


@dataclass
class RunReport:
    """Outcome of one harness run.

    ``verdicts`` maps a check name to ``{value, threshold, passed}``;
    ``failures`` lists refusals and errors as ``{kind, type, message}``
    with ``kind`` either ``"condition"`` or ``"error"``.
    """

    command: str
    name: str
    seed: int
    config_hash: str
    version: str
    constants: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    exponent_trace: list = field(default_factory=list)
    sigma_table: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def verdict(self, name, value, threshold, passed=None, **extra):
        value = float(value)
        ok = bool(value <= threshold) if passed is None else bool(passed)
        self.verdicts[name] = {"value": value, "threshold": float(threshold), "passed": ok, **extra}
        return ok

    def fail(self, kind, exc):
        entry = {"kind": kind, "type": type(exc).__name__, "message": str(exc)}
        extra = getattr(exc, "report", None)
        if extra is not None:
            entry["report"] = extra.to_dict() if hasattr(extra, "to_dict") else extra
        self.failures.append(entry)

    @property
    def status(self):
        if any(f["kind"] == "error" for f in self.failures):
            return "error"
        if self.failures or not all(v["passed"] for v in self.verdicts.values()):
            return "condition_failure"
        return "ok"

    @property
    def exit_code(self):
        return {"ok": 0, "error": 1, "condition_failure": 2}[self.status]

    def to_dict(self, timings=False):
        out = {
            "schema_version": SCHEMA_VERSION,
            "version": self.version,
            "command": self.command,
            "name": self.name,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "status": self.status,
            "exit_code": self.exit_code,
            "constants": self.constants,
            "conditions": self.conditions,
            "verdicts": self.verdicts,
            "residuals": self.residuals,
            "spectrum": self.spectrum,
            "details": self.details,
            "failures": self.failures,
            "samples": self.samples,
            "exponent_trace": self.exponent_trace,
            "sigma_table": self.sigma_table,
        }
        if timings:
            out["timings"] = self.timings
        return sanitize(out)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def emit(report: RunReport, out_dir, formats=("json", "csv")):
    """Write the report files into ``out_dir``; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(report.to_json())
        written.append(path)
        path = os.path.join(out_dir, "timings.json")
        with open(path, "w") as fh:
            json.dump(sanitize(report.timings), fh, sort_keys=True, indent=2)
        written.append(path)
        if report.sigma_table:
            path = os.path.join(out_dir, "sigma.json")
            with open(path, "w") as fh:
                json.dump(sanitize(report.sigma_table), fh, sort_keys=True, indent=2)
            written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, "residuals.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESIDUAL_COLUMNS)
            for row in report.samples:
                w.writerow([_fmt(row[c]) for c in RESIDUAL_COLUMNS])
        written.append(path)
        if report.exponent_trace:
            path = os.path.join(out_dir, "exponents.csv")
            d = len(report.exponent_trace[0]) - 1
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step"] + [f"lambda_{i + 1}" for i in range(d)])
                for row in report.exponent_trace:
                    w.writerow([int(row[0])] + [_fmt(v) for v in row[1:]])
            written.append(path)
    return written


def _fmt(v):
    return repr(v) if isinstance(v, float) else v
