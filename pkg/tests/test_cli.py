import csv

import numpy as np
import pytest

from varexp.cli import main, parse_config
from varexp.errors import ConfigError

MINIMAL = """\
# minimal solve config
domain = unit_square
levels = 3
steps = 32
T = 1
exponent = constant 2
flux = prototype
delta = 0.1
"""


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_config_is_valid():
    cfg = parse_config(MINIMAL)
    assert cfg["levels"] == 3 and cfg["steps"] == 32 and cfg["delta"] == 0.1


@pytest.mark.parametrize("text, line, reason", [
    ("levels = 3\nexponent = constant 1.0\n", 2, "DegenerateExponent"),
    ("exponent = constant 1.5\nq = constant 3.5\n", 2, "ExponentOrderViolation"),
    ("levels = 3\nspeed = 4\n", 2, "ConfigError"),
    ("steps = many\n", 1, "ConfigError"),
    ("\n\nlevels = 12\n", 3, "ConfigError"),
    ("levels 3\n", 1, "ConfigError"),
    ("delta = 0\nexponent = constant 1.5\n", 1, "SingularFlux"),
])
def test_config_errors(text, line, reason):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.reason == reason
    assert str(info.value).startswith(f"line {line}: ")


def test_solve_manufactured(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL + "source = manufactured\nstride = 16\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    energy = read(tmp_path / "o" / "energy.csv")
    assert energy[0] == ["k", "t", "kinetic", "dissipation", "work", "slack"]
    slack = np.array([float(r[5]) for r in energy[1:]])
    kin0 = float(energy[1][2])
    assert len(slack) == 33 and slack.min() >= -1e-8 * (1 + kin0)
    manifest = dict((r[0], int(r[1])) for r in read(tmp_path / "o" / "manifest.csv")[1:])
    assert manifest["energy.csv"] == 33
    assert {"snapshot_00000.csv", "snapshot_00016.csv", "snapshot_00032.csv"} <= set(manifest)
    for name, rows in manifest.items():
        assert len(read(tmp_path / "o" / name)) == rows + 1


def test_counterexample_row_contract(tmp_path):
    status = main(["counterexample", "--truncations", "5", "--out", str(tmp_path), "--quiet"])
    assert status in (0, 1)
    assert len(read(tmp_path / "counterexample.csv")) == 6
    assert len(read(tmp_path / "figure1.csv")) > 100
    assert "figure1.csv" in {r[0] for r in read(tmp_path / "manifest.csv")}


def test_verify_structure(tmp_path):
    args = ["verify-structure", "--model", "prototype", "--exponent", "bump",
            "--samples", "10000", "--seed", "42", "--out", str(tmp_path), "--quiet"]
    assert main(args) == 0
    rows = read(tmp_path / "structure.csv")[1:]
    assert [r[0] for r in rows] == ["S2", "S3", "S4", "B2", "B3"]
    assert all(float(r[2]) >= -1e-9 for r in rows)


def test_determinism(tmp_path):
    for d in ("a", "b"):
        main(["inequalities", "--suite", "korn", "--seed", "3", "--out", str(tmp_path / d),
              "--quiet"])
    for name in ("korn.csv", "manifest.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("exponent = constant 0.5\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "DegenerateExponent" in capsys.readouterr().err


def test_newton_failure_exit(tmp_path, capsys):
    cfg = tmp_path / "hard.cfg"
    cfg.write_text("exponent = constant 1.5\nu0 = sine 10\nsteps = 2\nmax_iter = 1\n"
                   "tol_res = 1e-14\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2
    assert "NewtonFailure" in capsys.readouterr().err
    assert (tmp_path / "o" / "manifest.csv").exists()


def test_convergence_command(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("exponent = constant 1.6\nlevels = 4\nsteps = 8\nu0 = sine 2\n")
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    rows = read(tmp_path / "convergence.csv")
    assert rows[0] == ["level", "l2_diff", "modular_diff", "proxy", "bound"] and len(rows) == 5
