"""Persistence: trajectory and table CSVs, JSON reports, all with versioned headers.

Floats are written with 17 significant digits so a read-back reproduces the
stored arrays bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .trajectory import Trajectory

FORMAT_VERSION = "1"
TRAJECTORY_TAG = "inflowlab-trajectory"
TABLE_TAG = "inflowlab-table"
REPORT_TAG = "inflowlab-report"
STEP_COLUMNS = ("t", "step", "inflow_cum", "outflow_cum", "div_integral", "div_running_max")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Trajectory CSV
# ---------------------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """One row per stored time: step data, inflow densities, cell densities, face velocities.

    Two comment lines precede the column header: the format tag with the grid
    shape, and the run metadata as JSON.
    """
    path = Path(path)
    d = traj.domain
    shape = "x".join(str(n) for n in d.shape)
    n_b = len(traj.partition.un)
    face_shapes = ["x".join(str(n) for n in d.face_shape(a)) for a in range(d.dimension)]
    cols = list(STEP_COLUMNS) + [f"rho_B_{j}" for j in range(n_b)] + [f"rho_{i}" for i in range(int(np.prod(d.shape)))]
    for a in range(d.dimension):
        cols += [f"u{a}_{i}" for i in range(int(np.prod(d.face_shape(a))))]
    with path.open("w", newline="") as fh:
        fh.write(f"# {TRAJECTORY_TAG} v{FORMAT_VERSION} dim={d.dimension} cells={shape} "
                 f"faces={','.join(face_shapes)} boundary={n_b}\n")
        fh.write("# meta " + json.dumps(traj.meta, sort_keys=True, default=_json_default) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(len(traj)):
            row = [_fmt(traj.times[k]), str(traj.steps[k]), _fmt(traj.inflow_cum[k]), _fmt(traj.outflow_cum[k]),
                   _fmt(traj.div_integral[k]), _fmt(traj.div_running_max[k])]
            row += [_fmt(x) for x in np.asarray(traj.rho_B[k]).ravel()]
            row += [_fmt(x) for x in traj.rho[k].ravel()]
            for comp in traj.u[k]:
                row += [_fmt(x) for x in comp.ravel()]
            w.writerow(row)
    return path


def read_trajectory_csv(path, domain, partition) -> Trajectory:
    """Rebuild a Trajectory from :func:`write_trajectory_csv` output on the given grid.

    Raises:
        ConfigurationError: unknown format or a grid shape mismatch.
    """
    path = Path(path)
    with path.open() as fh:
        tag = fh.readline().split()
        meta_line = fh.readline()
        if len(tag) < 3 or tag[1] != TRAJECTORY_TAG or tag[2] != f"v{FORMAT_VERSION}":
            raise ConfigurationError(f"{path}: not a v{FORMAT_VERSION} trajectory file", "trajectory")
        fields = dict(item.split("=", 1) for item in tag[3:])
        shape = "x".join(str(n) for n in domain.shape)
        if fields.get("cells") != shape or int(fields.get("dim", -1)) != domain.dimension:
            raise ConfigurationError(f"{path}: grid {fields.get('cells')} does not match domain {shape}",
                                     "trajectory.cells")
        meta = json.loads(meta_line.split(" ", 2)[2])
        reader = csv.reader(fh)
        next(reader)
        rows = [r for r in reader if r]
    n_b = int(fields["boundary"])
    n_c = int(np.prod(domain.shape))
    traj = Trajectory(domain, partition, meta=meta)
    for r in rows:
        vals = np.array([float(x) for x in r])
        pos = len(STEP_COLUMNS)
        rho_B = vals[pos:pos + n_b]
        pos += n_b
        rho = vals[pos:pos + n_c].reshape(domain.shape)
        pos += n_c
        u = []
        for a in range(domain.dimension):
            m = int(np.prod(domain.face_shape(a)))
            u.append(vals[pos:pos + m].reshape(domain.face_shape(a)))
            pos += m
        traj.store(vals[0], rho, tuple(u), vals[2], vals[3], vals[4], vals[5], int(r[1]), rho_B)
    return traj


# ---------------------------------------------------------------------------
# Tables and reports
# ---------------------------------------------------------------------------


def write_table_csv(rows: list[dict], path, columns=None, kind: str = "table") -> Path:
    """Rows of scalars under a versioned comment header; columns default to the first row's keys."""
    path = Path(path)
    columns = list(rows[0].keys()) if columns is None and rows else list(columns or [])
    with path.open("w", newline="") as fh:
        fh.write(f"# {TABLE_TAG} v{FORMAT_VERSION} kind={kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def read_table_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        fh.readline()
        return list(csv.DictReader(fh))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return v


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(report: dict, path, kind: str) -> Path:
    """JSON report with ``format``/``version``/``kind`` keys and sorted fields."""
    path = Path(path)
    body = {"format": REPORT_TAG, "version": FORMAT_VERSION, "kind": kind, "report": report}
    path.write_text(json.dumps(body, sort_keys=True, indent=2, default=_json_default) + "\n")
    return path


def read_json(path) -> dict:
    body = json.loads(Path(path).read_text())
    if body.get("format") != REPORT_TAG:
        raise ConfigurationError(f"{path}: not an inflowlab report", "report")
    return body["report"]
