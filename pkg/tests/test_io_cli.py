import json
from pathlib import Path

import numpy as np
import pytest

from delaycontrol import ConfigError, RetardedSystem
from delaycontrol.cli import main
from delaycontrol.io import load_config, parse_config, read_generator_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def worked_cfg(**over):
    cfg = {"type": "retarded", "delays": [0, 1], "a": [0, 1], "y": 1.0, "x0": {"const": 0}, "epsilon": 0.5, "grid_h": 0.001}
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, *args, out="out"):
    code = main(list(args) + ["--out", str(tmp_path / out)])
    return code, tmp_path / out


def test_parse_worked_config():
    prob = parse_config(worked_cfg())
    assert prob.kind == "retarded" and prob.epsilon == 0.5
    assert prob.model.is_simplest()
    assert prob.horizon == pytest.approx(1.5)


def test_history_forms():
    prob = parse_config(worked_cfg(x0={"poly": [1, 2]}, grid_h=0.25))
    assert np.allclose(prob.state.x0.samples, 1 + 2 * np.array([-1, -0.75, -0.5, -0.25, 0]))
    prob = parse_config(worked_cfg(x0={"samples": [0, 1, 2, 3, 4]}, grid_h=0.25))
    assert np.array_equal(prob.state.x0.samples, [0, 1, 2, 3, 4])
    with pytest.raises(ConfigError, match="x0.samples"):
        parse_config(worked_cfg(x0={"samples": [0, 1]}, grid_h=0.25))


@pytest.mark.parametrize(
    "patch, key",
    [
        ({"type": "chaotic"}, "type"),
        ({"epsilon": "big"}, "epsilon"),
        ({"epsilon": 0.5004}, "grid_h"),
        ({"x0": {"spline": [1]}}, "x0"),
        ({"d": [0.5]}, "d"),
    ],
)
def test_bad_configs_name_the_key(patch, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(worked_cfg(**patch))


def test_missing_key_is_named():
    cfg = worked_cfg()
    del cfg["a"]
    with pytest.raises(ConfigError, match="'a'"):
        parse_config(cfg)


def test_general_system_is_brought_to_companion_form():
    cfg = {"type": "system", "A": [[0.2, 1.0], [0.5, -0.3]], "b": [1.0, 2.0], "y": [1, 0], "x0": {"const": 0}, "epsilon": 0.3}
    prob = parse_config(cfg)
    assert isinstance(prob.model, RetardedSystem) and prob.model.is_companion()
    assert prob.horizon == pytest.approx(2.3)


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.json")):
        load_config(path)


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"type": "retarded",\n "a": [0, 1,]}')
    code, _ = run(tmp_path, "optimal", "--config", str(p))
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_simulate_zero_state_gives_zero_trajectory(tmp_path):
    cfg = write_cfg(tmp_path, worked_cfg(y=0.0))
    code, out = run(tmp_path, "simulate", "--config", cfg, "--u", "zero")
    assert code == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 1] == 0.0)
    assert json.loads((out / "manifest.json").read_text())["outputs"] == ["trajectory.csv"]


def test_simulate_optimal_reports_null_residual(tmp_path):
    cfg = write_cfg(tmp_path, worked_cfg())
    code, out = run(tmp_path, "simulate", "--config", cfg, "--u", "optimal")
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["results"]["null_residual"] <= 1e-5


def test_optimal_summary(tmp_path):
    code, out = run(tmp_path, "optimal", "--config", write_cfg(tmp_path, worked_cfg()))
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["constants"][0] == pytest.approx(-2.16395, abs=1e-5)
    rows = (out / "control.csv").read_text().splitlines()
    assert rows[0] == "t,u,segment_label"
    zero = json.loads((run(tmp_path, "optimal", "--config", write_cfg(tmp_path, worked_cfg(y=0.0), "z.json"), out="z")[1] / "summary.json").read_text())
    assert zero["energy"] == 0.0


def test_neutral_config_without_derivative_fails(tmp_path, capsys):
    cfg = {"type": "neutral", "delays": [0, 1], "a": [0, 1], "d": [0.5], "y": 1.0, "x0": {"const": 1}, "epsilon": 0.3}
    code, _ = run(tmp_path, "optimal", "--config", write_cfg(tmp_path, cfg))
    assert code == 3
    assert "MissingDerivative" in capsys.readouterr().err


def test_verify_zero_state_passes(tmp_path):
    cfg = write_cfg(tmp_path, worked_cfg(y=0.0))
    code, out = run(tmp_path, "verify", "--config", cfg, "--samples", "5")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert [c["name"] for c in report["checks"]] == ["null", "oracle", "ortho", "monotone", "optimality"]


def test_verify_oracle_distance(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "--config", write_cfg(tmp_path, worked_cfg()), "--checks", "oracle")
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("PASS oracle") and float(line.split("value=")[1].split()[0]) <= 1e-3


def test_verify_corrupted_generator_fails(tmp_path, capsys):
    cfg = write_cfg(tmp_path, worked_cfg())
    run(tmp_path, "optimal", "--config", cfg, out="opt")
    gen = tmp_path / "opt" / "generator.csv"
    rows = gen.read_text().splitlines()
    t, v = rows[100].split(",")
    rows[100] = f"{t},{float(v) + 5.0}"
    gen.write_text("\n".join(rows) + "\n")
    assert read_generator_csv(gen, 1e-3).M == 500
    code, _ = run(tmp_path, "verify", "--config", cfg, "--checks", "null", "--generator", str(gen))
    assert code == 4
    assert "FAIL null: value=" in capsys.readouterr().out


def test_spectrum_outputs(tmp_path, capsys):
    code, out = run(tmp_path, "spectrum", "--config", write_cfg(tmp_path, worked_cfg()))
    assert code == 0
    zeros = np.loadtxt(out / "spectrum.csv", delimiter=",", skiprows=1)
    assert np.min(np.abs(zeros[:, 0] + 1j * zeros[:, 1] + 0.5671433j)) < 1e-7
    assert "half-plane" in capsys.readouterr().out
    code, _ = run(tmp_path, "spectrum", "--config", str(CONFIGS / "neutral_two_delays.json"), out="n")
    assert code == 0 and "strip" in capsys.readouterr().out


def test_oracle_command(tmp_path):
    code, out = run(tmp_path, "oracle", "--config", write_cfg(tmp_path, worked_cfg()))
    assert code == 0
    report = json.loads((out / "oracle_report.json").read_text())
    assert abs(report["moment_residuals"][0]) < 1e-10


@pytest.mark.parametrize("command", ["simulate", "optimal", "verify", "spectrum", "oracle"])
def test_reruns_are_byte_identical(tmp_path, command):
    cfg = str(CONFIGS / "worked_simplest.json")
    extra = ["--samples", "10"] if command == "verify" else []
    code_a, a = run(tmp_path, command, "--config", cfg, "--seed", "7", *extra, out="a")
    code_b, b = run(tmp_path, command, "--config", cfg, "--seed", "7", *extra, out="b")
    assert code_a == code_b == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
