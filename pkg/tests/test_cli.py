import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from dnlplap import cli
from dnlplap.checks import CheckResult
from dnlplap.config import parse_config
from dnlplap.core import read_snapshot


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_eigen_defaults_emit_pi_squared(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "")
    assert cli.main(["eigen", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "default" / "eigen.csv")
    assert rows[0] == ["lambda", "iterations", "residual_sup"]
    assert float(rows[1][0]) == pytest.approx(math.pi**2, rel=5e-3)
    phi, p = read_snapshot(tmp_path / "default" / "phi.txt")
    assert p.p == 2.0 and phi.grid.shape == (201,)
    assert "lambda" in capsys.readouterr().out


def test_evolve_writes_trajectory(tmp_path):
    cfg = write_cfg(tmp_path, "name = ev\nn_nodes = 41\nt_end = 0.01\nsnapshot_stride = 10\n")
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = tmp_path / "ev"
    times = read_rows(out / "trajectory" / "times.csv")
    assert times[0] == ["step", "time", "dt", "sup_norm"]
    assert float(times[-1][1]) == pytest.approx(0.01, rel=1e-12)
    last, _ = read_snapshot(sorted((out / "trajectory").glob("*.txt"))[-1])
    rows = read_rows(out / "evolve.csv")
    assert float(rows[1][2]) == last.sup_norm


def test_probe_emits_one_row_per_radius(tmp_path):
    text = "name = pr\nn_nodes = 41\nt_end = 0.05\nprobe_radii = 0.05, 0.1\nprobe_t0 = 0.05\n"
    assert cli.main(["probe", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "pr" / "probe.csv")
    assert rows[0] == ["radius", "lip_ratio", "time_holder_ratio", "loglip_ratio", "combined_ratio", "pair_count"]
    assert [float(r[0]) for r in rows[1:]] == [0.05, 0.1]
    assert all(float(x) >= 0 for r in rows[1:] for x in r[1:])


def test_largetime_p2_half_ground_state(tmp_path):
    text = "name = lt\nn_nodes = 51\ninitial = scaled_ground_state(0.5)\nt_end = 0.2\nsnapshot_stride = 50\n"
    assert cli.main(["largetime", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "lt" / "largetime.csv")
    assert rows[0] == ["t", "rq", "fit_c", "sup_dist"]
    fit_c = np.array([float(r[2]) for r in rows[1:]])
    dist = np.array([float(r[3]) for r in rows[1:]])
    assert np.allclose(fit_c, 0.5, rtol=1e-2)
    assert np.all(dist < 1e-6)


def test_largetime_nonseparable_distance_decreases(tmp_path):
    # a ground state plus a second mode: the second mode dies out faster
    from dnlplap.core import Field, Grid, write_snapshot
    from dnlplap.eigen import ground_state

    g = Grid.uniform(51)
    phi = ground_state(g, 2.0, 1e-10).phi
    x = g.coords[0]
    v = 0.4 * phi.values + 0.2 * np.sin(2 * np.pi * x) * phi.values / phi.sup_norm
    v[g.boundary_mask] = 0.0
    path = write_snapshot(Field(g, v), 2, tmp_path / "g.txt")
    text = f"name = lt2\nn_nodes = 51\ninitial = file({path})\nt_end = 0.3\nsnapshot_stride = 100\n"
    assert cli.main(["largetime", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 0
    dist = np.array([float(r[3]) for r in read_rows(tmp_path / "lt2" / "largetime.csv")[1:]])
    assert np.all(np.diff(dist[1:]) < 0)


def test_outputs_are_bit_identical(tmp_path):
    text = "name = det\nn_nodes = 41\nt_end = 0.05\nprobe_radii = 0.1\nprobe_t0 = 0.05\nseed = 4\n"
    cfg = write_cfg(tmp_path, text)
    for run in ("a", "b"):
        assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / run)]) == 0
        assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / run)]) == 0
    for rel in ("det/probe.csv", "det/evolve.csv", "det/trajectory/times.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    snaps = sorted((tmp_path / "a" / "det" / "trajectory").glob("*.txt"))
    assert snaps
    for s in snaps:
        assert s.read_bytes() == (tmp_path / "b" / "det" / "trajectory" / s.name).read_bytes()


def test_csv_floats_carry_17_digits():
    assert cli._cell(0.1) == "0.10000000000000001"
    assert float(cli._cell(np.float64(1) / 3)) == 1 / 3
    assert cli._cell(7) == "7" and cli._cell(True) == "True"


def test_verify_defaults_pass(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "name = v\nn_nodes = 101\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "0 failed" in out
    rows = read_rows(tmp_path / "v" / "verify.csv")
    assert all(r[1] in ("pass", "skip") for r in rows[1:])


def test_verify_failure_exits_one(tmp_path, capsys):
    # 5 nodes are far too coarse for the 1% eigenvalue oracle
    cfg = write_cfg(tmp_path, "name = coarse\nn_nodes = 5\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "eigen_oracle" in capsys.readouterr().out.splitlines()[-1]


def test_usage_and_config_errors_exit_two(tmp_path, capsys):
    bad = write_cfg(tmp_path, "p = 1.5\n")
    assert cli.main(["eigen", "--config", bad]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["eigen", "--config", str(tmp_path / "missing.cfg")]) == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["launch", "--config", bad])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["eigen"])
    assert info.value.code == 2


def test_module_value_error_exits_two(tmp_path, capsys):
    # probe cylinder larger than the recorded time span
    text = "name = big\nn_nodes = 41\nt_end = 0.001\nprobe_radii = 0.3\n"
    assert cli.main(["probe", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 2
    assert "[big] probe R=0.3" in capsys.readouterr().err


def test_newton_failure_exits_three(tmp_path, capsys):
    text = "name = stiff\np = 3\nscheme = implicit\nnewton_max_iter = 1\ninitial = cone(0.5, 4)\nn_nodes = 41\nt_end = 0.01\n"
    assert cli.main(["evolve", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "[stiff] evolve:" in err and "did not converge" in err


def test_seed_override_reaches_checks(tmp_path, monkeypatch):
    seen = []

    def fake_checks(cfg):
        seen.append(cfg.seed)
        return [CheckResult("fake", "pass", 0.0, 1.0)]

    monkeypatch.setattr(cli, "run_checks", fake_checks)
    cfg = write_cfg(tmp_path, "seed = 3\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path), "--seed", "11"]) == 0
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert seen == [11, 3]


def test_dnl_threads(tmp_path, monkeypatch):
    from threadpoolctl import threadpool_info

    seen = []
    monkeypatch.setattr(cli, "run_checks", lambda cfg: seen.append(threadpool_info()) or [CheckResult("x", "pass", 0, 1)])
    cfg = write_cfg(tmp_path, "")
    monkeypatch.setenv("DNL_THREADS", "1")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert all(pool["num_threads"] == 1 for pool in seen[0])
    monkeypatch.setenv("DNL_THREADS", "0")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    monkeypatch.setenv("DNL_THREADS", "many")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_run_rejects_unknown_command(tmp_path):
    with pytest.raises(ValueError):
        cli.run("plot", parse_config(""), tmp_path)


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, "name = sub\nn_nodes = 21\n")
    proc = subprocess.run([sys.executable, "-m", "dnlplap.cli", "eigen", "--config", cfg, "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.splitlines()[0] == "lambda,iterations,residual_sup"
