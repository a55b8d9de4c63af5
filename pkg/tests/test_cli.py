import json

import pytest

from stochfi.cli import EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC, EXIT_OK, main
from stochfi.config import WORKED_EXAMPLE, ConfigError, ProblemConfig


def write_config(tmp_path, name="cfg.json", **changes):
    data = json.loads(json.dumps(WORKED_EXAMPLE))
    data.update(changes)
    for k in [k for k, v in changes.items() if v is None]:
        del data[k]
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_construct_example(tmp_path):
    cfg = write_config(tmp_path, n_samples=200)
    out = tmp_path / "out"
    assert main(["construct", str(cfg), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "check_report.json").read_text())
    assert report["passed"]
    assert all(c["max_residual"] <= 1e-8 for c in report["conditions"].values())
    assert "B_1 = (0.1*exp(-2*x1)" in (out / "system.txt").read_text()
    assert (out / "system_grid.csv").read_text().startswith("t,x1,x2,a1,a2,b11,b21,g1,g2,gamma")
    assert json.loads((out / "effective_config.json").read_text())["n_samples"] == 200


def test_constant_integral_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, u="1", diffusion_family=None, jump_family=None)
    assert main(["construct", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
    assert "gradient" in capsys.readouterr().err


def test_missing_field_named(tmp_path, capsys):
    cfg = write_config(tmp_path, n=None)
    assert main(["construct", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "n: missing required field" in capsys.readouterr().err


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"bogus": 1}, "bogus"),
        ({"u": "x3 + 1"}, "u"),
        ({"x0": [0.0]}, "x0"),
        ({"control": {"P": ["x1"], "Q": [["1"]]}}, "control.P"),
        ({"dt": -1.0}, "dt"),
        ({"mark_law": {"kind": "normal"}}, "mark_law"),
    ],
)
def test_validation_errors(tmp_path, changes, field):
    data = json.loads(json.dumps(WORKED_EXAMPLE))
    data.update(changes)
    with pytest.raises(ConfigError) as info:
        ProblemConfig.from_dict(data)
    assert info.value.field == field
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["construct", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_control_example(tmp_path):
    out = tmp_path / "out"
    assert main(["control", str(write_config(tmp_path)), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "control_report.json").read_text())
    assert rep["max_residual"] <= 1e-10 * rep["scale"]
    assert (out / "control_grid.csv").read_text().startswith("t,x1,x2,s1,s2,residual")


def test_singular_gain(tmp_path):
    cfg = write_config(tmp_path, control={"P": WORKED_EXAMPLE["control"]["P"], "Q": [["0", "0"], ["0", "0"]]})
    assert main(["control", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC


def test_control_zero_when_p_is_target(tmp_path):
    cfg = write_config(tmp_path, control={"P": ["-0.01*exp(-4*x1)", "0"], "Q": [["1", "0"], ["0", "1"]]})
    out = tmp_path / "o"
    assert main(["control", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = (out / "control_grid.csv").read_text().splitlines()[1:]
    for row in rows:
        s1, s2 = map(float, row.split(",")[3:5])
        assert abs(s1) <= 1e-10 and abs(s2) <= 1e-10


def test_simulate_and_rerun_effective_config(tmp_path):
    out = tmp_path / "a"
    assert main(["simulate", str(write_config(tmp_path)), "--out", str(out), "--paths", "3", "--seed", "7"]) == EXIT_OK
    stats = json.loads((out / "stats.json").read_text())
    assert stats["n_paths"] == 3 and stats["passed"]
    assert sorted(p.name for p in (out / "paths").iterdir()) == ["path_0000.csv", "path_0001.csv", "path_0002.csv"]
    again = tmp_path / "b"
    assert main(["simulate", str(out / "effective_config.json"), "--out", str(again)]) == EXIT_OK
    for name in ["stats.json", "paths/path_0000.csv", "paths/path_0002.csv", "effective_config.json"]:
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_simulate_coarse_step_exit_code(tmp_path):
    out = tmp_path / "o"
    code = main(["simulate", str(write_config(tmp_path, q00="1")), "--out", str(out), "--paths", "5", "--dt", "0.1"])
    assert code in (EXIT_OK, EXIT_FAIL)
    assert json.loads((out / "stats.json").read_text())["passed"] == (code == EXIT_OK)


def test_pure_diffusion_run(tmp_path):
    out = tmp_path / "o"
    cfg = write_config(tmp_path, intensity=0.0, control=None)
    assert main(["simulate", str(cfg), "--out", str(out), "--paths", "2"]) == EXIT_OK
    assert json.loads((out / "stats.json").read_text())["total_jumps"] == 0


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("STOCHFI_OUT", str(tmp_path / "env"))
    assert main(["construct", str(write_config(tmp_path, n_samples=50))]) == EXIT_OK
    assert (tmp_path / "env" / "check_report.json").exists()


def test_missing_config_file(tmp_path):
    assert main(["construct", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_INVALID


@pytest.mark.slow
def test_demo_exit_zero_and_closed_forms(tmp_path, capsys):
    assert main(["demo", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "max |G - closed form| on 10x10x10 grid" in text and "-> ok" in text


def test_evaluation_failure_is_numeric(tmp_path):
    cfg = write_config(tmp_path, u="ln(x1)", diffusion_family=None, jump_family=None)
    assert main(["construct", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
