"""CSV / JSON serialisation of scans, solve outcomes and verification reports.

Floats go through ``repr`` (shortest round-trip representation) so files
read back bit-for-bit; non-finite values become ``NaN``/``inf`` in CSV and
``null`` in JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .body import body_to_dict
from .solver import CSV_FIELDS, ScanResult, SolveOutcome


def _num(x):
    if isinstance(x, (np.floating, float)):
        return repr(float(x))
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    return str(x)


def scan_csv_text(scan: ScanResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in scan.rows:
        writer.writerow([_num(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def write_scan_csv(scan: ScanResult, path) -> None:
    Path(path).write_text(scan_csv_text(scan))


def read_scan_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("p", "q", "sphere_distance", "lambda_2", "residual"):
            row[key] = float(row[key])
        row["seed"] = int(row["seed"])
        row["iterations"] = int(row["iterations"])
    return rows


def jsonable(obj):
    """Recursively convert numpy containers and non-finite floats for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, bytes)):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=1, allow_nan=False)


def outcome_to_dict(out: SolveOutcome, p: float, q: float, extra: dict | None = None) -> dict:
    doc = {
        "p": p,
        "q": q,
        "status": out.status.value,
        "iterations": out.iterations,
        "sphere_distance": out.sphere_distance,
        "residual": out.residual,
        "residual_history": list(out.residual_history),
        "message": out.message,
        "final_h": body_to_dict(out.final_h),
    }
    if extra:
        doc.update(extra)
    return doc
