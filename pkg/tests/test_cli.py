import json
import math
import subprocess
import sys

import numpy as np
import pytest

from pulseswitch import cli
from pulseswitch.tables import read_table

LIN = {"id": "linear_test"}


def _run(tmp_path, cfg, name="exp", **kw):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return cli.run(path, output=tmp_path / "out", **kw)


def _table(tmp_path, name="exp"):
    return read_table(tmp_path / "out" / f"{name}.csv")


def test_simulate(tmp_path):
    cfg = {"command": "simulate", "model": LIN, "x0": [-1, 0], "pulse": {"mu": 1, "tau": math.log(2)},
           "t_end": 2.0}
    assert _run(tmp_path, cfg) == 0
    meta, cols, data = _table(tmp_path)
    assert cols == ["t", "x1", "x2", "u"] and meta["command"] == "simulate"
    i = int(np.argmin(np.abs(data[:, 0] - math.log(2))))
    assert data[i, 0] == pytest.approx(math.log(2)) and abs(data[i, 1]) < 1e-9
    assert data[-1, 0] == 2.0 and data[-1, 3] == 0.0


def test_spectrum(tmp_path):
    assert _run(tmp_path, {"command": "spectrum", "model": {"id": "repressilator8"}}) == 0
    meta, cols, data = _table(tmp_path)
    assert meta["lambda1"] == pytest.approx(-0.54174243, abs=1e-7)
    assert data[0, 1] == pytest.approx(meta["lambda1"])
    assert data.shape == (8, 6)


def test_rgrid_threads_identical(tmp_path):
    cfg = {"command": "rgrid", "model": LIN, "x": [-1, 0], "mu_axis": [0.5, 1.0, 2.0],
           "tau_axis": {"start": 0, "stop": 2, "num": 5}}
    assert _run(tmp_path, cfg, "a") == 0
    assert _run(tmp_path, cfg, "b", threads=2) == 0
    body = lambda n: (tmp_path / "out" / f"{n}.csv").read_text().split("\n", 1)[1]
    assert body("a") == body("b")
    _, cols, data = _table(tmp_path, "a")
    assert cols == ["mu", "tau", "r"] and data.shape == (15, 3)
    mu, tau, r = data[7]
    assert r == pytest.approx(-math.exp(-tau) + mu * (1 - math.exp(-tau)), rel=1e-6)


def test_determinism(tmp_path):
    cfg = {"command": "levelset", "model": LIN, "x": [-1, 0], "alpha": [0, -0.2],
           "mu_axis": [1, 2, 3], "tau_bracket": [0, 5]}
    assert _run(tmp_path, cfg, "a") == 0
    first = (tmp_path / "out" / "a.csv").read_bytes()
    assert _run(tmp_path, cfg, "a") == 0
    assert (tmp_path / "out" / "a.csv").read_bytes() == first
    _, _, data = _table(tmp_path, "a")
    assert data[0, 2] == pytest.approx(math.log(2), rel=1e-6)


def test_optimize_infeasible_exit_4(tmp_path):
    cfg = {"command": "optimize", "model": {"id": "repressilator8"}, "x": "other", "epsilon": 0.01,
           "E_max": 10, "mu_axis": [2, 3, 4], "tau_bracket": [0, 25]}
    assert _run(tmp_path, cfg) == 4
    meta, _, data = _table(tmp_path)
    assert meta["feasible"] is False and data[0, -1] == 0


def test_optimize_feasible(tmp_path):
    cfg = {"command": "optimize", "model": LIN, "x": [-1, 0], "epsilon": 0.01, "E_max": 100,
           "mu_axis": [1, 2, 3], "tau_bracket": [0, 5]}
    assert _run(tmp_path, cfg) == 0
    _, cols, data = _table(tmp_path)
    assert data[0, cols.index("r_star")] == pytest.approx(-0.01, rel=1e-6)


def test_precondition_is_config_error(tmp_path):
    cfg = {"command": "optimize", "model": LIN, "x": [0.5, 0], "epsilon": 0.01, "E_max": 10,
           "mu_axis": [1, 2]}
    assert _run(tmp_path, cfg) == 2


def test_negative_t_samp_writes_nothing(tmp_path, capsys):
    cfg = {"command": "switch-closed", "model": {"id": "repressilator8", "setting": "B"},
           "x0": "other", "t_samp": -2}
    assert _run(tmp_path, cfg) == 2
    assert not (tmp_path / "out").exists()
    assert "t_samp" in capsys.readouterr().err


@pytest.mark.parametrize("cfg, field", [
    ({"command": "nope"}, "command"),
    ({"command": "simulate", "model": {"id": "nope"}}, "model.id"),
    ({"command": "simulate", "model": LIN, "x0": [1, 2], "t_end": "x"}, "t_end"),
    ({"command": "rgrid", "model": LIN, "x": [1, 2], "mu_axis": [2, 1], "tau_axis": [1]}, "mu_axis"),
])
def test_errors_name_field(tmp_path, capsys, cfg, field):
    assert _run(tmp_path, cfg) == 2
    assert field in capsys.readouterr().err


def test_bad_json(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    assert cli.run(tmp_path / "bad.json") == 2


def test_switch_open_and_closed(tmp_path):
    base = {"model": LIN, "x0": [-1, 0], "epsilon": 0.01, "horizon": 6.0}
    assert _run(tmp_path, {**base, "command": "switch-open", "pulse": {"mu": 0.5, "tau": 1}}, "o") == 0
    meta, _, data = _table(tmp_path, "o")
    assert meta["energy_spent"] == 0.5 and data[-1, -1] == meta["success"]
    closed = {**base, "command": "switch-closed", "t_samp": 0.5, "tau0": 2, "E_max": 2,
              "mu_grid": [0, 0.5, 1, 1.5]}
    assert _run(tmp_path, closed, "c") == 0
    meta, cols, data = _table(tmp_path, "c")
    assert cols == ["t", "mu", "budget_remaining", "s1_true", "success"]
    assert len(data) == 5 and data[-1, 2] == pytest.approx(2 - meta["energy_spent"])


FHN_GRID = {"x_axis": [0, 2], "y_axis": [0, 2], "mu_axis": [0.1, 0.3], "tau_axis": [5, 10]}


def test_sync_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("PULSESWITCH_CACHE", str(tmp_path / "cache"))
    cfg = {"command": "sync", "model": {"id": "fitzhugh_nagumo"}, "ensemble": {"count": 3},
           "T_p": 20, "N_p": 2, "grid": FHN_GRID, "seed": 4}
    assert _run(tmp_path, cfg, "s") == 0
    meta, cols, data = _table(tmp_path, "s")
    assert cols == ["pulse", "mu", "tau", "max_delay"] and len(data) == 2 and meta["seed"] == 4
    _, scols, states = _table(tmp_path, "s_states")
    assert scols == ["cell", "x1", "x2"] and len(states) == 3
    again = {**cfg, "ensemble_csv": str(tmp_path / "out" / "s_states.csv"), "N_p": 1}
    assert _run(tmp_path, again, "t") == 0
    assert _table(tmp_path, "t")[1] == cols


def test_dmd_round_trip(tmp_path):
    cfg = {"command": "dmd", "model": LIN, "x": [-1, 0], "pulse_tags": [[1, math.log(2)], [0, math.log(2)],
                                                                      [0.5, 1.0]],
           "T_s": 1.0}
    assert _run(tmp_path, cfg, "d") == 0
    _, _, first = _table(tmp_path, "d")
    assert first[1, 2] == pytest.approx(-0.5, rel=1e-6)
    back = {"command": "dmd", "snapshots_csv": str(tmp_path / "out" / "d_snapshots.csv")}
    assert _run(tmp_path, back, "e") == 0
    _, _, second = _table(tmp_path, "e")
    assert np.allclose(second, first, rtol=1e-8, atol=1e-12)


def test_entry_point(tmp_path):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"command": "spectrum", "model": LIN}))
    proc = subprocess.run([sys.executable, "-m", "pulseswitch.cli", "run", str(cfg), "--output",
                           str(tmp_path), "--seed", "9"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert read_table(tmp_path / "spec.csv")[0]["seed"] == 9
