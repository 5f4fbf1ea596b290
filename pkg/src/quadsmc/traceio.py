"""Trace and metrics serialization.

Trace CSV layout is fixed (stable downstream plotting):

    time, phi, theta, psi, p, q, r, phi_d, theta_d, psi_d,
    e1..e3, sigma1..sigma3, sigmadot1..sigmadot3, alpha1..alpha3,
    u_phi, u_theta, u_psi, d1..d3, f1..f4, V0, V, fault

Angles (phi..psi, phi_d..psi_d, e1..e3) are written in degrees to match
the usual plotting convention; body rates, sliding variables, gains,
torques and thrusts stay in SI units.  Numbers are serialized with 17
significant digits, so re-reading a file reproduces the written values
bit-for-bit and identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .simulation import SimTrace

__all__ = [
    "TRACE_COLUMNS",
    "trace_rows",
    "write_trace_csv",
    "read_trace_csv",
    "write_metrics",
]

TRACE_COLUMNS = (
    "time",
    "phi", "theta", "psi",
    "p", "q", "r",
    "phi_d", "theta_d", "psi_d",
    "e1", "e2", "e3",
    "sigma1", "sigma2", "sigma3",
    "sigmadot1", "sigmadot2", "sigmadot3",
    "alpha1", "alpha2", "alpha3",
    "u_phi", "u_theta", "u_psi",
    "d1", "d2", "d3",
    "f1", "f2", "f3", "f4",
    "V0", "V",
    "fault",
)

_DEG = 180.0 / math.pi


def trace_rows(trace: "SimTrace", decimate: int = 1) -> tuple[np.ndarray, list[str]]:
    """Numeric matrix (file units) and fault strings for every kept row."""
    if decimate < 1:
        raise ValueError("decimation factor must be >= 1")
    idx = np.arange(0, len(trace), decimate)
    numeric = np.column_stack(
        [
            trace.time[idx],
            trace.theta[idx] * _DEG,
            trace.omega[idx],
            trace.theta_d[idx] * _DEG,
            trace.e[idx] * _DEG,
            trace.sigma[idx],
            trace.sigma_dot[idx],
            trace.alpha[idx],
            trace.u[idx],
            trace.d[idx],
            trace.forces[idx],
            trace.v0[idx],
            trace.v[idx],
        ]
    )
    faults = [trace.fault[i] for i in idx]
    return numeric, faults


def write_trace_csv(trace: "SimTrace", path: str | Path, decimate: int = 1) -> Path:
    """Write a trace in the fixed CSV schema; returns the path."""
    path = Path(path)
    numeric, faults = trace_rows(trace, decimate)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row, fault in zip(numeric, faults):
            fh.write(",".join("%.17g" % x for x in row))
            fh.write("," + fault + "\n")
    return path


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray | list[str]]:
    """Read a trace CSV back into per-column arrays (file units).

    Values equal the written ones exactly: 17 significant digits
    round-trip IEEE doubles.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header in {path}")
        numeric_cols = len(TRACE_COLUMNS) - 1
        values: list[list[float]] = []
        faults: list[str] = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(TRACE_COLUMNS):
                raise ValueError(f"malformed trace row in {path}: {line!r}")
            values.append([float(x) for x in parts[:numeric_cols]])
            faults.append(parts[-1])
    matrix = np.array(values) if values else np.zeros((0, numeric_cols))
    out: dict[str, np.ndarray | list[str]] = {
        name: matrix[:, i] for i, name in enumerate(TRACE_COLUMNS[:-1])
    }
    out["fault"] = faults
    return out


def write_metrics(metrics: dict, path: str | Path, fmt: str = "json") -> Path:
    """Write a metrics report keyed by axis and metric name.

    fmt "json" writes one nested object; "csv" writes axis,metric,value
    rows.  None values (e.g. an unsettled axis) serialize as JSON null or
    an empty CSV cell.
    """
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write("axis,metric,value\n")
            for axis in sorted(metrics):
                for name in sorted(metrics[axis]):
                    value = metrics[axis][name]
                    if value is None:
                        rendered = ""
                    elif isinstance(value, float):
                        rendered = "%.17g" % value
                    else:
                        rendered = str(value)
                    fh.write(f"{axis},{name},{rendered}\n")
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")
    return path
