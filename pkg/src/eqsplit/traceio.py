"""Trace and summary files.

Floats are written with 17 significant digits, which round-trips every
double exactly.  Missing values are empty cells in CSV and ``null`` in
JSON lines.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .solver import TRACE_FIELDS, SolveResult, Trace, TraceRecord

__all__ = ["emit_trace", "read_trace", "write_summary", "format_float", "FORMATS"]

FORMATS = ("csv", "jsonl")


def format_float(v) -> str:
    return format(v, ".17g")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format_float(v)


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format_float(v)


def emit_trace(trace: Trace, fmt: str, path) -> None:
    """Write ``trace`` to ``path`` as ``csv`` or ``jsonl``.

    Raises:
        OSError: the file cannot be written; the message names the path.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if fmt == "csv":
                fh.write(",".join(TRACE_FIELDS) + "\n")
                for rec in trace:
                    fh.write(",".join(_csv_cell(v) for v in rec.as_row()) + "\n")
            else:
                for rec in trace:
                    items = ", ".join(
                        f'"{k}": {_json_value(v)}' for k, v in zip(TRACE_FIELDS, rec.as_row())
                    )
                    fh.write("{" + items + "}\n")
    except OSError as err:
        raise OSError(f"cannot write trace to {path}: {err.strerror or err}") from err


def _record(values: dict) -> TraceRecord:
    def num(key):
        v = values.get(key)
        if v is None or v == "":
            return None
        return float(v)

    return TraceRecord(
        int(values["k"]),
        num("beta"),
        num("lambda"),
        num("norm_y_minus_x"),
        num("norm_z_minus_x"),
        num("fixed_point_residual"),
        num("prox_residual"),
        num("dist_to_oracle"),
        num("wall_time_s"),
    )


def read_trace(path, fmt: str | None = None) -> Trace:
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix == ".csv" else "jsonl"
    trace = Trace()
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
                raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
            for row in reader:
                trace.append(_record(row))
        else:
            for line in fh:
                if line.strip():
                    trace.append(_record(json.loads(line)))
    return trace


def write_summary(result: SolveResult, path, **extra) -> None:
    inv = result.invariants
    summary = {
        "status": result.status,
        "iterations": result.iterations,
        "x_final": [float(v) for v in result.x],
        "fixed_point_residual": result.residual_T,
        "component_residual": result.residual_component,
        "prox_residual": result.residual_prox,
        "dist_to_oracle": result.dist_to_oracle,
        "message": result.message,
        "invariants": {
            "lambda_min": inv.lambda_min,
            "lambda_max": inv.lambda_max,
            "z_bound_slack": inv.z_bound_slack,
            "feasibility": inv.feasibility,
            "fejer_slack": inv.fejer_slack,
            "min_fixed_point_residual": inv.min_fixed_point_residual,
        },
    }
    summary.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
