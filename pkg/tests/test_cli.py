import json

import numpy as np
import pytest

from inflowlab import cli, io
from inflowlab.config import parse_config, parse_config_text
from inflowlab.errors import ConfigurationError

BASE = """
[run]
label = inflow
[domain]
cells = 40
[boundary]
u_left = 1.0
u_right = 1.0
rho_left = 1.2
[initial]
rho_kind = cosine
rho_amplitude = 0.2
u_kind = sine
u_amplitude = 0.2
[time]
T = 0.1
cadence = 1
"""


def test_minimal_config_defaults():
    cfg = parse_config_text("[domain]\ncells = 100\n")
    assert cfg.experiment == "simulate"
    assert cfg["time"]["cadence"] == 10
    # no flow: CFL 0.5 with the unit velocity floor
    assert cfg["time"]["dt"] == pytest.approx(0.5 / 100)
    cfg = parse_config_text(BASE.replace("u_left = 1.0", "u_left = 2.0").replace("T = 0.1", "T = 0.5")
                            .replace("cadence = 1", ""))
    assert cfg["time"]["dt"] <= 0.5 * (1 / 40) / 2.0 + 1e-15
    assert cfg["time"]["cadence"] == 10


def test_beta_rejection_cites_condition():
    with pytest.raises(ConfigurationError, match=r"beta > max\{gamma, 9/2\}") as exc:
        parse_config_text("[regularization]\ndelta = 0.1\nbeta = 3\n[law]\ngamma = 2\n")
    assert exc.value.path == "regularization.beta"


def test_missing_inflow_density_names_face():
    with pytest.raises(ConfigurationError, match="face x-") as exc:
        parse_config_text("[boundary]\nu_left = 1.0\nu_right = 1.0\n")
    assert exc.value.path == "boundary.rho_left"
    with pytest.raises(ConfigurationError, match="face x\\+"):
        parse_config_text("[boundary]\nu_left = -1.0\nu_right = -1.0\nrho_left = 1.0\n")


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ConfigurationError, match="line 3, column 3"):
        parse_config_text("[domain]\ncells = 10\n  oops\n")
    with pytest.raises(ConfigurationError, match="line 1"):
        parse_config_text("cells = 10\n")


def test_field_level_errors():
    with pytest.raises(ConfigurationError) as exc:
        parse_config_text("[domain]\ncells = ten\n")
    assert exc.value.path == "domain.cells"
    with pytest.raises(ConfigurationError) as exc:
        parse_config_text("[domain]\nsize = 3\n")
    assert exc.value.path == "domain.size"
    with pytest.raises(ConfigurationError) as exc:
        parse_config_text("[viscosity]\nmu = 0\n")
    assert exc.value.path == "viscosity.mu"


def test_trajectory_csv_roundtrip_bitwise(tmp_path):
    cfg = parse_config_text(BASE)
    setup = cfg.setup()
    from inflowlab.momentum import simulate
    traj = simulate(setup)
    path = io.write_trajectory_csv(traj, tmp_path / "t.csv")
    back = io.read_trajectory_csv(path, setup.domain, setup.partition)
    assert np.array_equal(back.t, traj.t)
    assert all(np.array_equal(a, b) for a, b in zip(back.rho, traj.rho))
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(back.u, traj.u))
    assert back.inflow_cum == traj.inflow_cum and back.meta == json.loads(json.dumps(traj.meta))
    with pytest.raises(ConfigurationError):
        io.read_trajectory_csv(path, parse_config_text("[domain]\ncells = 20\n").domain(), setup.partition)


def _outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != cli.MANIFEST}


def test_determinism_and_manifest(tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(BASE)
    codes = [cli.main(["audit", "--config", str(cfg_path), "--out", str(tmp_path / d), "--seed", "7"])
             for d in ("a", "b")]
    assert codes == [0, 0]
    a, b = _outputs(tmp_path / "a"), _outputs(tmp_path / "b")
    assert a == b and "trajectory.csv" in a and "trajectory_runlog.csv" in a
    assert cli.verify_manifest(tmp_path / "a") == []
    man = json.loads((tmp_path / "a" / cli.MANIFEST).read_text())
    assert man["config_hash"] == parse_config(cfg_path).hash()
    assert man["statuses"]["mass"] == "PASS"
    (tmp_path / "a" / "extra.txt").write_text("x")
    assert cli.verify_manifest(tmp_path / "a") == ["unlisted file extra.txt"]


def test_simulate_manifest_lists_trajectory(tmp_path):
    man = cli.run("simulate", parse_config_text(BASE), tmp_path)
    paths = [a["path"] for a in man.artifacts]
    assert paths == ["trajectory.csv", "trajectory_runlog.csv"]


def test_failure_record_and_exit_status(tmp_path):
    bad = BASE.replace("[time]", "[regularization]\nepsilon = 5.0\n[time]").replace("u_amplitude = 0.2",
                                                                                   "u_amplitude = 40")
    cfg_path = tmp_path / "bad.ini"
    cfg_path.write_text(bad)
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1
    rec = io.read_json(tmp_path / "o" / "failure.json")
    assert rec["error"] == "StepSizeError"
    assert cli.verify_manifest(tmp_path / "o") == []
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o2")]) == 2


def test_sweep_epsilon_monotone_and_workers_match(tmp_path):
    text = BASE.replace("T = 0.1", "T = 0.05").replace("[time]", "[sweep]\nepsilon = 0.1, 0.01, 0.001\n[time]")
    text = text.replace("[time]", "[time]\ndt = 0.0005", 1)
    cfg = parse_config_text(text)
    m1 = cli.run("sweep", cfg, tmp_path / "s1", workers=1)
    m2 = cli.run("sweep", cfg, tmp_path / "s2", workers=2)
    assert m1.statuses["z-norm-monotone"] == "PASS"
    assert (tmp_path / "s1" / "sweep.csv").read_bytes() == (tmp_path / "s2" / "sweep.csv").read_bytes()
    rows = io.read_table_csv(tmp_path / "s1" / "sweep.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.001, 0.01, 0.1]


def test_sweep_mesh_orders_and_delta_cauchy():
    rows = [{"epsilon": 0.0, "delta": 0.0, "cells": n, "status": "PASS", "_rho": list(1 + np.full(n, 1.0 / n))}
            for n in (10, 20, 40)]
    out = cli.sweep_reduce(rows)
    assert out[2]["mesh_order"] == pytest.approx(1.0)
    rows = [{"epsilon": 0.0, "delta": d, "cells": 4, "status": "PASS", "_rho": [1 + d] * 4} for d in (0.1, 0.01)]
    out = cli.sweep_reduce(rows)
    # rows sort by ascending delta; the smaller delta carries the difference to its predecessor
    assert [r["delta_cauchy_l1"] for r in out] == [pytest.approx(0.09), ""]


def test_single_point_sweep_equals_run(tmp_path):
    cfg = parse_config_text(BASE.replace("[time]", "[sweep]\ncells = 40\n[time]"))
    cli.run("sweep", cfg, tmp_path / "s")
    cli.run("simulate", cfg, tmp_path / "r")
    row = io.read_table_csv(tmp_path / "s" / "sweep.csv")[0]
    log = io.read_table_csv(tmp_path / "r" / "trajectory_runlog.csv")
    assert float(row["final_mass"]) == float(log[-1]["mass"])


def test_ws_verb_uniqueness_envelope(tmp_path):
    text = "[run]\nexperiment = ws\n[experiment]\npair = travelling_wave\neta = 0\nmeshes = 25, 50, 100\n"
    man = cli.run("ws", parse_config_text(text), tmp_path)
    assert "uniqueness-envelope: PASS" in man.summary
    rec = io.read_json(tmp_path / "ws_verdict.json")
    assert {"case", "eta", "meshes", "max_violation", "pass", "E_curve", "bound_curve"} <= set(rec)
