"""Command-line interface: exit codes, artifacts, determinism."""

import json

import pytest

from cycleperturb.cli import main
from cycleperturb.system import EXAMPLE_CONFIG

ZERO_PHI_CONFIG = """\
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"
[perturbation]
T1 = 6.283185307179586
[cycle]
seed = [0.5, 0.5]
"""

ROTATION_CONFIG = """\
[system]
psi1 = "x2"
psi2 = "-x1"
[perturbation]
phi1 = "sin(t)"
phi2 = "0"
T1 = 6.283185307179586
[cycle]
seed = [0.5, 0.5]
"""


@pytest.fixture()
def config(tmp_path):
    p = tmp_path / "example.toml"
    p.write_text(EXAMPLE_CONFIG)
    return p


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1


def test_missing_config_flag(capsys):
    assert main(["cycle"]) == 1


def test_missing_config_file(tmp_path, capsys):
    assert main(["cycle", "--config", str(tmp_path / "nope.toml")]) == 1


def test_example_command(tmp_path, capsys):
    out = tmp_path / "e.toml"
    assert main(["example", "--out", str(out)]) == 0
    assert "[system]" in out.read_text()
    assert main(["example", "--irrational", "--out", str(out)]) == 0
    assert "scan" in out.read_text()


def test_cycle_command(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["cycle", "--config", str(config), "--out", str(out)]) == 0
    doc = json.loads((out / "cycle.json").read_text())
    assert doc["T0"] == pytest.approx(2 * 3.141592653589793, abs=1e-7)
    assert doc["period_ratio"]["rational"]
    header = (out / "cycle.csv").read_text().splitlines()[0]
    assert header == "theta,x1,x2,dx1,dx2"
    assert "manifest" in doc and doc["manifest"]["command"] == "cycle"


def test_tubes_command(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["tubes", "--config", str(config), "--out", str(out),
                 "--gamma", "0.15"]) == 0
    doc = json.loads((out / "tubes.json").read_text())
    assert doc["gamma"] == 0.15
    assert (out / "curve.csv").exists()
    assert (out / "boundary_w.csv").exists()
    assert (out / "annulus.csv").exists()


def test_hypothesis_failure_exit_2(tmp_path, capsys):
    p = tmp_path / "rot.toml"
    p.write_text(ROTATION_CONFIG)
    assert main(["cycle", "--config", str(p)]) == 2


def test_condition_failure_exit_3(tmp_path, capsys):
    p = tmp_path / "z.toml"
    p.write_text(ZERO_PHI_CONFIG)
    out = tmp_path / "run"
    assert main(["conditions", "--config", str(p), "--out", str(out),
                 "--grid", "8"]) == 3
    doc = json.loads((out / "conditions.json").read_text())
    assert doc["A2_pass"] is False


def test_json_deterministic_modulo_timing(config, tmp_path, capsys):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["cycle", "--config", str(config),
                     "--out", str(out)]) == 0
        doc = json.loads((out / "cycle.json").read_text())
        doc["manifest"].pop("timing")
        outs.append(json.dumps(doc, sort_keys=True))
    assert outs[0] == outs[1]
    csv1 = (tmp_path / "r1" / "cycle.csv").read_bytes()
    csv2 = (tmp_path / "r2" / "cycle.csv").read_bytes()
    assert csv1 == csv2


def test_jobs_env_var(config, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CYCLEPERTURB_JOBS", "2")
    out = tmp_path / "run"
    assert main(["cycle", "--config", str(config), "--out", str(out)]) == 0
    doc = json.loads((out / "cycle.json").read_text())
    assert doc["manifest"]["parameters"]["jobs"] == 2


def test_bad_jobs_value(config, capsys, monkeypatch):
    monkeypatch.setenv("CYCLEPERTURB_JOBS", "zero")
    assert main(["cycle", "--config", str(config)]) == 1
