"""CSV serialization of logs, curves and surfaces, and run manifests.

All floating point values are written with 12 significant digits.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .analytics import DensityCurve, JointDensitySurface, LambdaSurface, MasterCurves
from .model import PHOTON, config_channel
from .trajectory import EventLog, Traces

FMT = "{:.12g}"


def _f(x) -> str:
    return FMT.format(float(x))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_event_log(log: EventLog, path) -> Path:
    r = log.weights.shape[1] if log.weights.ndim == 2 and log.weights.shape[1] else int(log.meta.get("r_max", 1))
    header = ["event_index", "time", "channel"] + [f"p_{k}" for k in range(r)]
    labels = log.labels
    rows = ([i, _f(t), labels[c]] + [_f(p) for p in w]
            for i, (t, c, w) in enumerate(zip(log.times, log.channels, log.weights)))
    return _write_rows(path, header, rows)


def read_event_log(path, photon_labels=None) -> EventLog:
    """Read an event CSV.

    Channel codes follow the order ``ph, cfg:0, ..., cfg:R-1``.  Only ``ph``
    counts as a photon unless ``photon_labels`` says otherwise (light-assisted
    logs, where every channel emits).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[:3] != ["event_index", "time", "channel"]:
        raise ValueError(f"{path}: not an event log (header {header[:3]})")
    r = len(header) - 3
    body = rows[1:]
    names = [row[2] for row in body]
    labels = (PHOTON,) if all(n == PHOTON for n in names) else (PHOTON,) + tuple(config_channel(k) for k in range(r))
    index = {lab: k for k, lab in enumerate(labels)}
    times = np.array([float(row[1]) for row in body])
    chans = np.array([index[n] for n in names], dtype=np.int64)
    weights = np.array([[float(x) for x in row[3:]] for row in body]).reshape(-1, r)
    photon = frozenset(photon_labels) if photon_labels is not None else frozenset([PHOTON])
    meta = {"total_time": float(times[-1]) if times.size else 0.0, "n_events": int(times.size), "r_max": r}
    return EventLog(times, chans, weights, labels, photon, meta)


def write_traces(traces: Traces, path) -> Path:
    r = traces.populations.shape[1]
    header = ["t", "upper"] + [f"P_{k}" for k in range(r)]
    rows = ([_f(t), _f(u)] + [_f(p) for p in ps] for t, u, ps in zip(traces.grid, traces.upper, traces.populations))
    return _write_rows(path, header, rows)


def write_master(curves: MasterCurves, path) -> Path:
    return write_traces(Traces(curves.grid, curves.upper, curves.populations), path)


def write_curve(curve: DensityCurve, path) -> Path:
    header = ["tau", "density"] + (["count"] if curve.counts is not None else [])
    if curve.counts is not None:
        rows = ([_f(t), _f(v), int(c)] for t, v, c in zip(curve.grid, curve.values, curve.counts))
    else:
        rows = ([_f(t), _f(v)] for t, v in zip(curve.grid, curve.values))
    return _write_rows(path, header, rows)


def read_curve(path) -> DensityCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DensityCurve(data[:, 0], data[:, 1])


def write_surface(surface: JointDensitySurface, path) -> Path:
    has_counts = surface.counts is not None
    header = ["tau1", "tau2", "density"] + (["count"] if has_counts else [])

    def rows():
        for i, t1 in enumerate(surface.tau1):
            for j, t2 in enumerate(surface.tau2):
                row = [_f(t1), _f(t2), _f(surface.values[i, j])]
                if has_counts:
                    row.append(int(surface.counts[i, j]))
                yield row

    return _write_rows(path, header, rows())


def write_lambda(lam: LambdaSurface, path, counts=None) -> Path:
    header = ["tau1", "tau2", "lambda", "masked"] + (["count"] if counts is not None else [])

    def rows():
        for i, t1 in enumerate(lam.tau1):
            for j, t2 in enumerate(lam.tau2):
                masked = bool(lam.mask[i, j])
                row = [_f(t1), _f(t2), "nan" if masked else _f(lam.values[i, j]), int(masked)]
                if counts is not None:
                    row.append(int(counts[i, j]))
                yield row

    return _write_rows(path, header, rows())


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
