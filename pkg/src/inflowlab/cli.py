"""
Command-line entry point: ``inflowlab <verb> --config run.ini --out DIR``.

Verbs: simulate, audit, ws, probe, sweep, constants. Every verb writes its
artifacts and a ``manifest.json`` into the output directory and exits with
status 0 iff every selected audit passed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, audit, io, ws
from .config import RunConfig, parse_config
from .errors import InflowLabError
from .momentum import simulate, z_norm_total
from .thermo import lower_bound_constant, residual_pressure_check
from .transport import mass_ledger, max_principle_audit, renorm_residual

PASS, FAIL = "PASS", "FAIL"
MANIFEST = "manifest.json"
MASS_TOL = 1e-10


@dataclass
class RunManifest:
    """Record of one CLI run; ``artifacts`` lists every other file in the output directory."""

    verb: str
    config_hash: str
    code_version: str
    seed: int
    started: str
    finished: str = ""
    artifacts: list = field(default_factory=list)
    statuses: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s == PASS for s in self.statuses.values())

    def add(self, path: Path, out: Path):
        self.artifacts.append({"path": str(Path(path).relative_to(out)), "sha256": io.file_sha256(path)})

    def write(self, out: Path) -> Path:
        self.artifacts.sort(key=lambda a: a["path"])
        self.summary = [f"{k}: {v}" for k, v in sorted(self.statuses.items())]
        path = out / MANIFEST
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def verify_manifest(out) -> list[str]:
    """Problems found: files missing from the manifest, or hashes that no longer match."""
    out = Path(out)
    man = json.loads((out / MANIFEST).read_text())
    listed = {a["path"]: a["sha256"] for a in man["artifacts"]}
    problems = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            rel = str(p.relative_to(out))
            if rel not in listed:
                problems.append(f"unlisted file {rel}")
            elif io.file_sha256(p) != listed[rel]:
                problems.append(f"hash mismatch {rel}")
    for rel in listed:
        if not (out / rel).is_file():
            problems.append(f"missing file {rel}")
    return problems


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _write_run(traj, out: Path, man: RunManifest, stem: str = "trajectory"):
    man.add(io.write_trajectory_csv(traj, out / f"{stem}.csv"), out)
    man.add(io.write_table_csv(traj.log, out / f"{stem}_runlog.csv", kind="run-log"), out)


def run_simulate(cfg: RunConfig, out: Path, man: RunManifest):
    traj = simulate(cfg.setup())
    _write_run(traj, out, man)
    man.statuses["simulate"] = PASS
    return traj


def audit_trajectory(cfg: RunConfig, traj) -> dict:
    """All configured audits on a trajectory; returns {name: report dict with 'status'}."""
    a = cfg["audit"]
    setup = cfg.setup()
    dx, dt = traj.domain.spacing[0], float(traj.meta["dt"])
    reports = {}
    if a["mass"]:
        m = mass_ledger(traj)
        scale = float(np.max(np.abs(m.mass_t)))
        tol = MASS_TOL * max(traj.total_steps, 1) * max(scale, 1.0)
        reports["mass"] = {"max_abs_residual": m.max_abs_residual, "tolerance": tol,
                           "status": PASS if m.max_abs_residual <= tol else FAIL}
    if a["max_principle"]:
        mp = max_principle_audit(traj)
        reports["max_principle"] = {**asdict(mp), "status": PASS if mp.passed else FAIL}
    if a["energy"]:
        curve = audit.energy_residual_curve(traj, setup.ext, setup.law, cfg.viscosity())
        e0 = audit.mechanical_energy(traj, 0, setup.ext, setup.law)
        slack = (dx + dt) * (1.0 + abs(e0))
        led = audit.energy_ledger(traj, setup.ext, setup.law, cfg.viscosity(), traj.times[-1])
        reports["energy"] = {"ledger": led.to_dict(), "min_residual": float(curve.min()), "slack": slack,
                             "status": PASS if curve.min() >= -slack else FAIL}
    if a["renormalization"]:
        reports["renormalization"] = {"renormalizer": a["renormalizer"],
                                      "residual": renorm_residual(traj, a["renormalizer"]), "status": PASS}
    return reports


def run_audit(cfg: RunConfig, out: Path, man: RunManifest):
    traj = simulate(cfg.setup())
    _write_run(traj, out, man)
    setup = cfg.setup()
    # audits read the persisted trajectory
    traj = io.read_trajectory_csv(out / "trajectory.csv", setup.domain, setup.partition)
    reports = audit_trajectory(cfg, traj)
    rows = []
    for name, rep in sorted(reports.items()):
        man.add(io.write_json(rep, out / f"audit_{name}.json", kind=f"audit-{name}"), out)
        man.statuses[name] = rep["status"]
        rows.append({"audit": name, "status": rep["status"]})
    man.add(io.write_table_csv(rows, out / "audit_summary.csv", kind="audit-summary"), out)


def run_ws(cfg: RunConfig, out: Path, man: RunManifest):
    e = cfg["experiment"]
    spec = ws.StabilitySpec(cfg.strong_pair(), cfg.law(), cfg.viscosity(), eta=e["eta"], perturb=tuple(e["perturb"]),
                            meshes=tuple(e["meshes"]), T=cfg["time"]["T"], cfl=e["cfl"],
                            collar_width=cfg["boundary"]["collar"], slack_constant=e["slack_constant"],
                            envelope_constant=e["envelope_constant"], case=cfg["run"]["label"])
    rec = ws.stability_experiment(spec)
    man.add(io.write_json(rec, out / "ws_verdict.json", kind="ws-verdict"), out)
    name = "uniqueness-envelope" if e["eta"] == 0 else "stability-bound"
    man.statuses[name] = PASS if rec["pass"] else FAIL


def run_probe(cfg: RunConfig, out: Path, man: RunManifest):
    traj = run_simulate(cfg, out, man)
    rep = audit.boundary_pressure_probe(traj, cfg.law(), cfg["probe"]["h_values"], factor=cfg["probe"]["factor"])
    man.add(io.write_json(rep.to_dict(), out / "probe.json", kind="pressure-probe"), out)
    man.statuses["pressure-probe"] = PASS if rep.passed else FAIL


def run_constants(cfg: RunConfig, out: Path, man: RunManifest):
    c = cfg["constants"]
    law = cfg.law()
    low = lower_bound_constant(law, c["a"], c["b"], step=c["step"])
    res = residual_pressure_check(law, c["a"], c["b"], step=c["step"])
    man.add(io.write_json({"lower_bound": low.to_dict(), "residual_pressure": res.to_dict()},
                          out / "constants.json", kind="constants"), out)
    man.statuses["constants"] = PASS if low.c > 0 else FAIL


def sweep_point(cfg: RunConfig, key: tuple) -> dict:
    """One sweep point; failures are recorded, not raised."""
    eps, delta, cells = key
    row = {"epsilon": eps, "delta": delta, "cells": cells}
    try:
        point = cfg.with_overrides(regularization__epsilon=eps, regularization__delta=delta, domain__cells=cells)
        traj = simulate(point.setup())
        row.update({"status": PASS, "z_norm_total": z_norm_total(traj), "final_mass": traj.log[-1]["mass"],
                    "final_kinetic": traj.log[-1]["kinetic"], "min_rho": min(r["min_rho"] for r in traj.log),
                    "error": "", "_rho": traj.rho[-1].tolist()})
    except InflowLabError as exc:
        row.update({"status": FAIL, "error": f"{type(exc).__name__}: {exc}"})
    return row


def _restrict(fine: np.ndarray, n_coarse: int):
    ratio = len(fine) // n_coarse
    if ratio * n_coarse != len(fine):
        return None
    return fine.reshape(n_coarse, ratio).mean(axis=1)


def sweep_reduce(rows: list[dict]) -> list[dict]:
    """Deterministic reduce: sort by key, add L1 Cauchy differences along delta and mesh Richardson orders."""
    rows = sorted(rows, key=lambda r: (r["epsilon"], r["delta"], r["cells"]))
    for r in rows:
        r["delta_cauchy_l1"] = ""
        r["mesh_diff_l1"] = ""
        r["mesh_order"] = ""
    # delta Cauchy: successive decreasing delta at fixed (epsilon, cells)
    groups = itertools.groupby(sorted(rows, key=lambda r: (r["epsilon"], r["cells"], -r["delta"])),
                               key=lambda r: (r["epsilon"], r["cells"]))
    for _, grp in groups:
        grp = [g for g in grp if g["status"] == PASS]
        for prev, cur in zip(grp, grp[1:]):
            cur["delta_cauchy_l1"] = float(np.sum(np.abs(np.array(cur["_rho"]) - prev["_rho"])) / cur["cells"])
    # mesh Richardson: successive refinement at fixed (epsilon, delta)
    groups = itertools.groupby(sorted(rows, key=lambda r: (r["epsilon"], r["delta"], r["cells"])),
                               key=lambda r: (r["epsilon"], r["delta"]))
    for _, grp in groups:
        grp = [g for g in grp if g["status"] == PASS]
        for coarse, fine in zip(grp, grp[1:]):
            rf = _restrict(np.array(fine["_rho"]), coarse["cells"])
            if rf is not None:
                fine["mesh_diff_l1"] = float(np.sum(np.abs(rf - coarse["_rho"])) / coarse["cells"])
        for a, b in zip(grp, grp[1:]):
            if a["mesh_diff_l1"] != "" and b["mesh_diff_l1"] != "" and b["mesh_diff_l1"] > 0:
                b["mesh_order"] = float(np.log(a["mesh_diff_l1"] / b["mesh_diff_l1"]) / np.log(b["cells"] / a["cells"]))
    for r in rows:
        r.pop("_rho", None)
    return rows


SWEEP_COLUMNS = ["epsilon", "delta", "cells", "status", "z_norm_total", "final_mass", "final_kinetic", "min_rho",
                 "delta_cauchy_l1", "mesh_diff_l1", "mesh_order", "error"]


def run_sweep(cfg: RunConfig, out: Path, man: RunManifest, workers: int = 1):
    s = cfg["sweep"]
    eps = s["epsilon"] or [cfg["regularization"]["epsilon"]]
    delta = s["delta"] or [cfg["regularization"]["delta"]]
    cells = s["cells"] or [cfg["domain"]["cells"]]
    keys = sorted(itertools.product(eps, delta, cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(keys), keys))
    else:
        rows = [sweep_point(cfg, k) for k in keys]
    rows = sweep_reduce(rows)
    man.add(io.write_table_csv(rows, out / "sweep.csv", SWEEP_COLUMNS, kind="sweep"), out)
    man.statuses["sweep"] = PASS if all(r["status"] == PASS for r in rows) else FAIL
    if len(eps) > 1:
        by_eps = {}
        for r in rows:
            if r["status"] == PASS:
                by_eps.setdefault(r["epsilon"], []).append(r["z_norm_total"])
        z = [max(by_eps[e]) for e in sorted(by_eps, reverse=True)]
        man.statuses["z-norm-monotone"] = PASS if all(a > b for a, b in zip(z, z[1:])) else FAIL
    return rows


PIPELINES = {"simulate": run_simulate, "audit": run_audit, "ws": run_ws, "probe": run_probe,
             "constants": run_constants, "sweep": run_sweep}


def run(verb: str, cfg: RunConfig, out, workers: int = 1, seed: int | None = None) -> RunManifest:
    """Execute ``verb`` and write the manifest; a failure is recorded in ``failure.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    np.random.seed(seed % 2**32)
    man = RunManifest(verb, cfg.hash(), __version__, seed, _now())
    try:
        if verb == "sweep":
            run_sweep(cfg, out, man, workers)
        else:
            PIPELINES[verb](cfg, out, man)
    except InflowLabError as exc:
        record = {"verb": verb, "error": type(exc).__name__, "message": str(exc),
                  "path": getattr(exc, "path", None), "traceback": traceback.format_exc()}
        man.add(io.write_json(record, out / "failure.json", kind="failure"), out)
        man.statuses[verb] = FAIL
    man.finished = _now()
    man.write(out)
    return man


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inflowlab", description=__doc__.strip().splitlines()[0])
    ap.add_argument("verb", choices=sorted(PIPELINES))
    ap.add_argument("--config", required=True, help="run configuration file (INI syntax)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    ap.add_argument("--seed", type=int, default=None, help="seed in [0, 2**64)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must lie in [0, 2**64)", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config)
    except InflowLabError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "path": getattr(exc, "path", None)}),
              file=sys.stderr)
        return 2
    man = run(args.verb, cfg, args.out, args.workers, args.seed)
    for line in man.summary:
        print(line)
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
