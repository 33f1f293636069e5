import json

import pytest

from fracftle.cli import main

TINY = {"n_modes": 8, "dt_fast": 0.01, "t0_slow": 0.4, "replicas": 4, "chunk": 4,
        "p_replicas": 100, "thetas": [0.4]}


def test_model_check_succeeds(capsys):
    assert main(["model-check", "--replicas", "50"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_ftle_of_linear_flow(capsys):
    assert main(["ftle", "--nu", "-0.5", "--n-modes", "8", "--t-end", "1", "--dt-fast", "0.01"]) == 0
    assert json.loads(capsys.readouterr().out)["ftle"] == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("argv", [
    ["simulate", "--t-end", "0.15", "--dt-fast", "0.1"],
    ["regime", "--case", "II", "--epsilon", "2.0"],
    ["regime", "--case", "I", "--replicas", "0"],
])
def test_bad_configuration_exits_2(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_failed_check_exits_1(tmp_path):
    cfg = tmp_path / "c.yaml"
    # a zero multiple leaves no room for sampling error, so the covariance check fails
    cfg.write_text("max_z: 0.0\n")
    assert main(["fbm-check", "--hurst", "0.5", "--replicas", "200", "--config", str(cfg)]) == 1


def test_regime_from_config_file_to_env_dir(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    monkeypatch.setenv("FRACFTLE_OUT", str(tmp_path / "out"))
    code = main(["regime", "--case", "IV", "--config", str(cfg), "--seed", "7"])
    assert code in (0, 1)
    report = json.loads((tmp_path / "out" / "regime.json").read_text())
    assert report["config"]["seed"] == 7 and report["kind"] == "case_IV"
    assert "PASS" in capsys.readouterr().err or code == 1


def test_simulate_writes_csv(tmp_path):
    out = tmp_path / "traj.csv"
    argv = ["simulate", "--n-modes", "4", "--sigma", "0.1", "--t-end", "0.1", "--dt-fast", "0.01",
            "--b0", "0.3", "--format", "csv", "--out", str(out)]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert any(line.startswith("t") for line in lines)
    assert main(argv + ["--out", str(tmp_path / "again.csv")]) == 0
    assert (tmp_path / "again.csv").read_text() == out.read_text()
