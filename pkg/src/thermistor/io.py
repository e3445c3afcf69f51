"""File formats: time-series CSV, field snapshots, run metadata, reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .diagnostics import COLUMNS, INT_COLUMNS, DiagnosticsRecord
from .grid import Grid

TIMESERIES = "timeseries.csv"
META = "meta.json"
CONFIG = "config.ini"
REPORT = "report.txt"
SNAPSHOT_COLUMNS = ("i", "j", "k", "x", "y", "z", "value")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_timeseries(path, record: DiagnosticsRecord):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in record.rows:
            w.writerow([fmt(int(row[c])) if c in INT_COLUMNS else fmt(row[c]) for c in COLUMNS])


def read_timeseries(path) -> DiagnosticsRecord:
    rec = DiagnosticsRecord()
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        for line in r:
            rec.rows.append({c: (int(v) if c in INT_COLUMNS else float(v)) for c, v in zip(COLUMNS, line)})
    return rec


def write_record(directory, record: DiagnosticsRecord, config_text: str):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_timeseries(d / TIMESERIES, record)
    (d / META).write_text(json.dumps({k: record.meta[k] for k in sorted(record.meta)}, indent=1) + "\n")
    (d / CONFIG).write_text(config_text)


def read_record(directory) -> tuple[DiagnosticsRecord, str]:
    d = Path(directory)
    rec = read_timeseries(d / TIMESERIES)
    rec.meta = json.loads((d / META).read_text())
    return rec, (d / CONFIG).read_text()


def write_snapshot(path, g: Grid, values):
    """One cell-centered field as ``i,j,k,x,y,z,value`` rows."""
    values = g.check_field(values)
    idx = np.indices(g.shape).reshape(3, -1)
    X, Y, Z = g.centers
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for n in range(g.n_cells):
            w.writerow([idx[0, n], idx[1, n], idx[2, n]] + [fmt(v) for v in (X[n], Y[n], Z[n], values[n])])


def read_snapshot(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if tuple(next(r)) != SNAPSHOT_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        return np.array([float(line[-1]) for line in r])


def snapshot_name(name: str, t: float) -> str:
    return f"{name}_t{fmt(t)}.csv"


def write_report(path, lines):
    Path(path).write_text("\n".join(lines) + "\n")
