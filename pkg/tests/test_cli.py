"""Command-line interface: exit codes and artifact layout."""

import json
import subprocess
import sys

import pytest

from copr.cli import main

QUICK_SIM = """
[grid]
m = 16
[basis]
k = 3
[diversity]
coeffs = -0.4, 0.0, 0.4
"""

QUICK_SOLVE = QUICK_SIM + """
[solver]
max_outer = 60
tau = 1e-7
inner_tol_factor = 1e-3
"""


def write_cfg(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "simulate" in capsys.readouterr().out


def test_unknown_command_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_measurements_is_io_error(tmp_path, capsys):
    rc = main(["solve", str(tmp_path / "nope.bin"), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "i/o error" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[grid]\nm = 16\nwidth = 3\n")
    rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "usage error" in capsys.readouterr().err


def test_bad_threads_is_usage_error(tmp_path, capsys):
    rc = main(["simulate", "--threads", "0", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_missing_config_file_is_io_error(tmp_path, capsys):
    rc = main(["simulate", "--config", str(tmp_path / "absent.ini"),
               "--out", str(tmp_path / "o")])
    assert rc == 1


def test_simulate_then_solve_roundtrip(tmp_path, capsys):
    sim_cfg = write_cfg(tmp_path, QUICK_SIM, "sim.ini")
    sim_out = tmp_path / "sim"
    assert main(["simulate", "--config", str(sim_cfg), "--seed", "7",
                 "--out", str(sim_out)]) == 0
    stdout = capsys.readouterr().out
    summary = json.loads(stdout.strip().splitlines()[-1])
    assert summary["command"] == "simulate"
    for name in ("measurements.bin", "truth.json", "config_echo.json",
                 "scene.png"):
        assert (sim_out / name).exists(), name

    solve_cfg = write_cfg(tmp_path, QUICK_SOLVE, "solve.ini")
    solve_out = tmp_path / "solve"
    assert main(["solve", str(sim_out / "measurements.bin"),
                 "--config", str(solve_cfg), "--seed", "7",
                 "--out", str(solve_out)]) == 0
    capsys.readouterr()
    result = json.loads((solve_out / "result.json").read_text())
    assert result["algorithm"] == "copr"
    assert result["converged"] is True
    # noise-free scenario: the reconstruction must explain the data
    assert result["misfit"] <= 1e-6
    for name in ("outer_trace.csv", "phase.csv", "phase.png",
                 "config_echo.json"):
        assert (solve_out / name).exists(), name

    truth = json.loads((sim_out / "truth.json").read_text())
    a_true = [complex(re, im) for re, im in truth["coefficients"]]
    a_hat = [complex(re, im) for re, im in result["coefficients"]]
    assert len(a_hat) == len(a_true) == 9


def test_grid_mismatch_between_sim_and_solve(tmp_path, capsys):
    sim_cfg = write_cfg(tmp_path, QUICK_SIM, "sim.ini")
    sim_out = tmp_path / "sim"
    assert main(["simulate", "--config", str(sim_cfg), "--out", str(sim_out)]) == 0
    capsys.readouterr()
    rc = main(["solve", str(sim_out / "measurements.bin"),
               "--out", str(tmp_path / "solve")])  # default m=32 config
    assert rc == 2
    assert "must match" in capsys.readouterr().err


def test_simulate_deterministic_bytes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUICK_SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--seed", "11",
                 "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "11",
                 "--out", str(b)]) == 0
    capsys.readouterr()
    assert (a / "measurements.bin").read_bytes() == (b / "measurements.bin").read_bytes()
    assert (a / "truth.json").read_text() == (b / "truth.json").read_text()


def test_seed_changes_measurements(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUICK_SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--seed", "1",
                 "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "2",
                 "--out", str(b)]) == 0
    capsys.readouterr()
    assert (a / "measurements.bin").read_bytes() != (b / "measurements.bin").read_bytes()


def test_console_script_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "copr", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "fixedpoint-diagnostics" in proc.stdout
