"""CSV/JSON/TSV persistence with exact float round-trips.

All floating-point output uses 17 significant digits, so every double
round-trips bit-exactly through the text artifacts.  Files are written
atomically (temp file + rename) so concurrent sweep workers never expose
partial output.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

__all__ = [
    "fmt",
    "atomic_write_text",
    "write_series_csv",
    "write_summary_json",
    "load_summary_json",
    "write_coeff_tsv",
    "write_particle_csv",
    "read_csv_columns",
    "read_coeff_file",
]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_series_csv(series, path, circle: bool = False) -> None:
    """Time-series CSV: one row per snapshot, diagnostics columns."""
    from .diagnostics import DiagnosticsRecord

    cols = DiagnosticsRecord.csv_columns(circle=circle)
    lines = [",".join(cols)]
    for rec in series.records:
        lines.append(",".join(fmt(v) for v in rec.as_row(circle=circle)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary_json(summary: dict, path) -> None:
    atomic_write_text(path, json.dumps(summary, indent=2, allow_nan=True) + "\n")


def load_summary_json(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def write_coeff_tsv(t_values, coef_rows, path) -> None:
    """Coefficient snapshots: first column t, then one column per degree."""
    coef_rows = np.asarray(coef_rows)
    header = "t\t" + "\t".join(f"c{m}" for m in range(coef_rows.shape[1]))
    lines = [header]
    for t, row in zip(t_values, coef_rows):
        lines.append(fmt(t) + "\t" + "\t".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_particle_csv(series, path) -> None:
    cols = ["t", "J_norm"] + [f"J{i + 1}" for i in range(series.n)]
    lines = [",".join(cols)]
    for i, t in enumerate(series.t):
        row = [t, series.J_norm[i]] + list(series.J[i])
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Parse a numeric CSV with a header row into named float arrays."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"malformed CSV {path}")
    return {name: data[:, i] for i, name in enumerate(header)}


def read_coeff_file(path) -> np.ndarray:
    """Coefficient list for --ic coeffs:PATH: whitespace/newline separated
    floats for degree 1 upward; '#' starts a comment."""
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                values.extend(float(tok) for tok in line.split())
    if not values:
        raise ValueError(f"no coefficients found in {path}")
    return np.array(values)
