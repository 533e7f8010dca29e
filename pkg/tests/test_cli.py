import csv
import json
import math

import numpy as np
import pytest

from qchydro import cli, presets

CFG = {
    "grid": {"shape": [16, 16]},
    "model": "pure_state_planar",
    "state": {
        "mode": "pure-state",
        "D": {"kind": "modes", "offset": 1.0, "modes": [{"amp": 0.1, "k": [1, 0]}]},
        "theta": 1.0,
        "phi": {"kind": "modes", "modes": [{"amp": 0.5, "k": [0, 1], "func": "sin"}]},
    },
    "hamiltonian": {"couplings": [{"V": {"kind": "modes", "offset": 0.5, "modes": [{"amp": 0.2, "k": [1, 1]}]},
                                   "matrix": "sigma_x"}]},
    "integrator": {"dt": 0.01, "t_end": 0.05},
    "diagnostics": {"every": 1, "loops": [{"center": [3.0, 3.0], "radius": 1.0}]},
    "snapshots": {"every": 5},
}


def _run(tmp_path, cfg, name="out"):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / name
    return cli.main(["run", "--config", str(p), "--out", str(out)]), out


def test_run_writes_csv_manifest_and_snapshots(tmp_path):
    rc, out = _run(tmp_path, CFG)
    assert rc == 0
    rows = list(csv.reader(open(out / "invariants.csv")))
    assert rows[0][:3] == ["t", "dt", "h"] and "loop_0_circ" in rows[0]
    assert len(rows) == 1 + 6
    assert "nan" in rows[1]
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "completed" and man["steps"] == 5
    paths = {f["path"] for f in man["files"]}
    assert "invariants.csv" in paths and "snapshots/snap_00001.bin" in paths
    assert all(len(f["sha256"]) == 64 for f in man["files"])


def test_snapshot_roundtrip(tmp_path):
    rc, out = _run(tmp_path, CFG)
    meta, flds = cli.read_snapshot(out / "snapshots" / "snap_00000")
    assert meta["endianness"] == "little" and meta["fields"][:3] == ["D", "ux", "uy"]
    assert meta["fields"][3:7] == ["psi0_re", "psi0_im", "psi1_re", "psi1_im"]
    x = np.arange(16) * 2 * np.pi / 16
    assert np.allclose(flds["D"][:, 0], 1.0 + 0.1 * np.cos(x))
    size = (out / "snapshots" / "snap_00000.bin").stat().st_size
    assert size == 8 * 16 * 16 * len(meta["fields"])


def test_density_matrix_snapshot_fields():
    state, _ = presets.smooth_2d(16, pure=False)
    names = [n for n, _ in cli.snapshot_fields(state)]
    assert names == ["D", "ux", "uy", "rho00_re", "rho00_im", "rho01_re", "rho01_im", "rho11_re", "rho11_im", "c"]


def test_t_end_zero_gives_one_row(tmp_path):
    cfg = dict(CFG, integrator={"dt": 0.01, "t_end": 0})
    rc, out = _run(tmp_path, cfg)
    assert rc == 0
    assert len(open(out / "invariants.csv").read().splitlines()) == 2


def test_deterministic_runs_byte_identical(tmp_path):
    _, a = _run(tmp_path, CFG, "a")
    _, b = _run(tmp_path, CFG, "b")
    assert (a / "invariants.csv").read_bytes() == (b / "invariants.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    bad = dict(CFG, model="qc3d")
    rc, _ = _run(tmp_path, bad)
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_blow_up_exit_code(tmp_path):
    cfg = dict(CFG, model="classical", integrator={"dt": 50.0, "t_end": 5000.0},
               hamiltonian={"eos": {"kind": "polytropic", "kappa": 5.0, "gamma": 2.0}},
               diagnostics={"every": 1000})
    rc, out = _run(tmp_path, cfg)
    assert rc == 3
    assert json.loads((out / "manifest.json").read_text())["status"] == "blow-up"


def test_plot_extracts_column_and_rejects_unknown(tmp_path, capsys):
    _, out = _run(tmp_path, CFG)
    capsys.readouterr()
    assert cli.main(["plot", "--run", str(out), "--quantity", "purity"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,purity" and len(lines) == 7
    assert cli.main(["plot", "--run", str(out), "--quantity", "nope"]) == 2
    err = capsys.readouterr().err
    assert "purity" in err and "mass" in err


def test_verify_algebra_quick_exits_zero(tmp_path):
    report = tmp_path / "rep.json"
    assert cli.main(["verify", "--suite", "algebra", "--quick", "--report", str(report)]) == 0
    assert json.loads(report.read_text())["seed"] == 0


def test_bad_arguments_exit_two():
    assert cli.main(["verify", "--suite", "nope"]) == 2


def test_fmt():
    assert cli._fmt(math.nan) == "nan"
    assert float(cli._fmt(0.1 + 0.2)) == 0.1 + 0.2
