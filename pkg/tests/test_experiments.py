import json

import pytest

from zerocap import cli
from zerocap.experiments import CRITERIA, ExperimentConfig, ExperimentReport, read_csv_body, run
from zerocap.geometry import ConfigurationError

SMALL = """
[experiment]
depth_M = 2
mesh_h = "1/8"
vertical_hz = "1/4"
seed = 7
delta_list = [0.2, 0.1]
epsilon = 0.5
scan_depth_M = 3
scan_mesh_h = "1/16"
ahlfors_samples = 20
llc_samples = 10
refinements = 1
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def test_defaults_are_valid():
    cfg = ExperimentConfig().validate()
    assert (cfg.depth_M, cfg.mesh_h, cfg.vertical_hz) == (4, 1 / 32, 1 / 16)
    assert cfg.ladder()[-1] == (4, 1 / 32, 1 / 16)
    assert len(cfg.ladder()) == 4


def test_toml_fractions(small_config):
    cfg = ExperimentConfig.from_toml(small_config).validate()
    assert cfg.mesh_h == 0.125 and cfg.vertical_hz == 0.25
    assert cfg.delta_list == (0.2, 0.1)


@pytest.mark.parametrize("bad", [
    {"delta_list": (0.1, 0.2)},
    {"delta_list": (0.6, 0.3)},
    {"mesh_h": 0.0},
    {"mesh_h": 1 / 8},
    {"vertical_hz": 0.5, "refinements": 1},
    {"delta0": 0.5},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**bad).validate()


def test_cli_exit_code_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("depth_M = 4\nmesh_h = 0.125\n")
    assert cli.main(["build", "--config", str(path), "--out", str(tmp_path)]) == 2
    path.write_text("colour = 3\n")
    assert cli.main(["build", "--config", str(path)]) == 2
    assert cli.main(["build", "--seed", "-1"]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_report_missing_inputs(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path)]) == 3
    text = (tmp_path / "report.txt").read_text()
    assert "missing experiments" in text and "MISSING" in text


def test_unknown_criterion():
    with pytest.raises(ValueError):
        ExperimentReport("x", {}).check(9, "nope", True)


def test_csv_bodies_are_reproducible(small_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        cfg = ExperimentConfig.from_toml(small_config)
        cfg.output_dir = str(out)
        run("llc", cfg.validate())
        run("ahlfors", cfg)
    for name in ("llc.csv", "ball_stats.csv"):
        assert read_csv_body(out1 / name) == read_csv_body(out2 / name)
        raw = (out1 / name).read_text()
        assert raw.startswith("# generated")
        body = [ln for ln in (out1 / name).read_bytes().split(b"\r\n") if ln and not ln.startswith(b"#")]
        assert body == [ln for ln in (out2 / name).read_bytes().split(b"\r\n") if ln and not ln.startswith(b"#")]


def test_small_pipeline(small_config, tmp_path):
    out = tmp_path / "run"
    codes = {}
    for cmd in ("build", "ahlfors", "llc", "decay", "duality", "quotient"):
        codes[cmd] = cli.main([cmd, "--config", str(small_config), "--out", str(out)])
        rep = json.loads((out / f"{cmd}.json").read_text())
        assert codes[cmd] == (0 if rep["passed"] else 1)
        assert all(a["criterion"] in CRITERIA for a in rep["assertions"])
    assert codes["build"] == 0 and codes["llc"] == 0
    for name in ("Y_M2_h8.off", "Y_M3_h16.off", "X.npz", "ball_stats.csv", "llc.csv", "decay.csv"):
        assert (out / name).exists()
    code = cli.main(["report", "--config", str(small_config), "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    assert code == (0 if report["passed"] else 1)
    text = (out / "report.txt").read_text()
    assert all(f"criterion {c} " in text for c in CRITERIA)
    for plot in ("plot_decay.csv", "plot_duality.csv", "plot_ahlfors.csv"):
        lines = (out / plot).read_text().splitlines()
        assert lines[0].startswith("# generated") and any(ln.startswith("# ") and ":" in ln for ln in lines[2:5])
    rows = read_csv_body(out / "decay.csv")
    assert rows[0][:3] == ["sweep", "delta", "epsilon"]
    assert {r[0] for r in rows[1:]} == {"delta", "resolution"}
