import csv
import json
import math

import numpy as np
import pytest

from hardylab import build_grid
from hardylab import cli, output
from hardylab.cli import ConfigError, main, parse_config


def run_cli(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--output-dir", str(out)])
    return code, out


def read_json(path):
    return json.loads(path.read_text())


# -- output formatting -----------------------------------------------------


def test_to_json_deterministic_and_exact():
    obj = {"b": np.float64(0.1), "a": [np.int64(3), True, None], "c": -0.0}
    text = output.to_json(obj)
    assert text == output.to_json(dict(reversed(list(obj.items()))))
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data["b"] == 0.1 and data["a"] == [3, True, None]
    assert '"c": 0\n' in text or '"c": 0,' in text


def test_to_json_non_finite():
    data = json.loads(output.to_json({"x": [math.nan, math.inf, -math.inf]}))
    assert data["x"] == ["nan", "inf", "-inf"]


def test_fmt_round_trips():
    for x in (np.pi, 1 / 3, 1e-300, 12345.678901234567):
        assert float(output.fmt(x)) == x


def test_tables_have_headers():
    g = build_grid(2, 5, 5)
    rows = list(csv.reader(output.field_table(g, np.arange(g.size) * 0.5).splitlines()))
    assert rows[0] == ["r", "theta", "value"] and len(rows) == g.size + 1
    rows = list(csv.reader(output.face_table([0.0, 0.1], np.ones((2, 3)), [7, 8, 9]).splitlines()))
    assert rows[0] == ["t", "face_id", "value"] and rows[1][1] == "7" and len(rows) == 7
    rows = list(csv.reader(output.series_table([0.0], [1.0], [2.0]).splitlines()))
    assert rows == [["t", "energy", "mass"], ["0", "1", "2"]]


def test_partial_marker_on_io_failure(tmp_path, monkeypatch):
    real = output.write_atomic
    calls = []

    def flaky(path, text):
        calls.append(path.name)
        if len(calls) == 2:
            raise OSError("disk full")
        real(path, text)

    monkeypatch.setattr(output, "write_atomic", flaky)
    with pytest.raises(OSError):
        output.write_outputs({"a.txt": "1", "b.txt": "2"}, tmp_path / "o")
    marker = tmp_path / "o" / output.PARTIAL_MARKER
    assert marker.read_text().split() == ["a.txt"]
    monkeypatch.setattr(output, "write_atomic", real)
    output.write_outputs({"a.txt": "1", "b.txt": "2"}, tmp_path / "o")
    assert not marker.exists()


# -- configuration ---------------------------------------------------------


def test_flags_override_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\ndim = 2\nnr = 10\nntheta = 10\n[eig]\nk = 2\nlambda = 0.5\n")
    cfg, _ = parse_config(["eig", "--config", str(ini), "--nr", "12"])
    assert (cfg.dimension, cfg.n_r, cfg.n_theta, cfg.k, cfg.lam) == (2, 12, 10, 2, 0.5)
    assert cfg.overridden == ["nr"]


def test_unknown_config_key(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\ncolour = blue\n")
    with pytest.raises(ConfigError, match="colour"):
        parse_config(["eig", "--config", str(ini)])


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(["eig", "--config", str(tmp_path / "nope.ini")])


def test_all_problems_reported(capsys):
    assert main(["ground-state", "--lambda", "1.5", "--dim", "2"]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "n_r" in err and "n_theta" in err and "alpha" in err
    assert "lambda(2)" in err


def test_bad_values_and_commands(capsys):
    assert main(["nonsense"]) == cli.EXIT_CONFIG
    assert main(["eig", "--dim", "2", "--nr", "x", "--ntheta", "8"]) == cli.EXIT_CONFIG
    assert main(["eig", "--dim", "4", "--nr", "8", "--ntheta", "8"]) == cli.EXIT_CONFIG
    assert main(["evolve-wave", "--dim", "2", "--nr", "8", "--ntheta", "8", "--T", "-1"]) == 2


def test_dt_defaults_to_fraction_of_horizon():
    cfg, _ = parse_config(["evolve-wave", "--dim", "2", "--nr", "8", "--ntheta", "8", "--T", "2"])
    assert cfg.dt == 2 / 400


def test_filter_none():
    cfg, _ = parse_config(["hum-wave", "--dim", "2", "--nr", "8", "--ntheta", "8", "--T", "2.5",
                           "--filter", "none"])
    assert cfg.filter_ratio is None


# -- runs ------------------------------------------------------------------

GRID = ["--dim", "2", "--nr", "12", "--ntheta", "12"]


def test_eig_run_and_manifest(tmp_path):
    code, out = run_cli(tmp_path, "eig", *GRID, "--lambda", "0.75", "--k", "2")
    assert code == cli.EXIT_OK
    summary = read_json(out / "summary.json")
    assert summary["command"] == "eig" and len(summary["eigenpairs"]) == 2
    manifest = read_json(out / "manifest.json")
    assert manifest["config"]["lambda"] == 0.75
    assert "smallest_generalized_eigenpairs" in manifest["operations"]
    assert manifest["summary_keys"] == sorted(summary)
    assert (out / "eigenvector_1.csv").exists()


def test_summary_is_byte_identical_across_runs(tmp_path):
    _, a = run_cli(tmp_path, "multiplier", *GRID, "--lambda", "0.75", "--T", "0.5", name="a")
    _, b = run_cli(tmp_path, "multiplier", *GRID, "--lambda", "0.75", "--T", "0.5", name="b")
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert read_json(a / "manifest.json")["input_hash"] != ""


def test_environment_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "root"))
    assert main(["tu8", *GRID]) == 0
    assert (tmp_path / "root" / "tu8" / "summary.json").exists()


def test_precondition_exit(tmp_path):
    code, _ = run_cli(tmp_path, "ground-state", "--dim", "3", "--nr", "8", "--ntheta", "8",
                      "--alpha", "5", "--lambda", "1")
    assert code == cli.EXIT_PRECONDITION


def test_not_converged_exit_keeps_outputs(tmp_path):
    code, out = run_cli(tmp_path, "hum-wave", *GRID, "--lambda", "1", "--T", "2.5",
                        "--dt", "0.05", "--max-iter", "1", "--tol", "1e-14")
    assert code == cli.EXIT_NOT_CONVERGED
    assert read_json(out / "summary.json")["converged"] is False
    assert (out / "control.csv").exists()


def test_io_failure_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["tu8", *GRID, "--output-dir", str(blocker / "sub")])
    assert code == cli.EXIT_IO


@pytest.mark.parametrize(
    "command,extra",
    [
        ("hardy-constants", ["--resolutions", "8,12"]),
        ("pohozaev", ["--lambda", "0.75"]),
        ("trace-check", ["--lambda", "0.5"]),
        ("ground-state", ["--alpha", "2"]),
        ("evolve-wave", ["--T", "0.2", "--snapshot-every", "40"]),
        ("evolve-schrodinger", ["--T", "0.2"]),
        ("observability", ["--T", "0.5", "--n-random", "1", "--n-basis", "3"]),
        ("hum-schrodinger", ["--T", "0.2", "--lambda", "0.75"]),
        ("e1-diagnostic", ["--nr", "64", "--ntheta", "64", "--epsilons", "0.2,0.1"]),
    ],
)
def test_commands_run(tmp_path, command, extra):
    code, out = run_cli(tmp_path, command, *GRID, *extra)
    assert code == cli.EXIT_OK
    assert read_json(out / "summary.json")["status"] == "ok"
