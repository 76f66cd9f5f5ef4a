import csv
import json
import math

import pytest

from tfqnn import cli
from tfqnn.config import dump_config, load_config, parse_config, preset_names
from tfqnn.errors import ConfigError, NumericalError

FIT = """\
experiment: fit_cosine
name: tiny_fit
model:
  num_qubits: 1
  num_layers: 1
train:
  iterations: 20
  batch_size: 4
  learning_rate: 1.0e-2
  seeds: [0, 1]
dataset:
  frequencies: [1]
  domain: [-pi, pi]
  num_points: 21
"""

NSE = """\
experiment: solve_nse
name: tiny_nse
model:
  num_qubits: 3
  num_layers: 1
  registers: split
train:
  iterations: 2
  batch_size: 8
  learning_rate: 1.0e-2
  seeds: [0]
flow:
  x: {lo: 0.5, hi: 3.0, num: 4}
  y: {lo: 0.25, hi: 1.75, num: 4}
  t: {lo: 0.0, hi: 1.0, num: 2}
  data_stride: [2, 2]
"""

SPECTRUM = """\
experiment: spectrum
spectrum:
  feature_map: simple
  num_qubits: 3
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT_ROOT, str(tmp_path / "runs"))
    return tmp_path


def write(path, text):
    path.write_text(text)
    return str(path)


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != "wall_clock"}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# config


def test_real_expressions():
    cfg = parse_config(FIT)
    assert cfg.dataset.domain == (-math.pi, math.pi)
    cfg = parse_config(FIT.replace("[-pi, pi]", "[-4pi, pi/2]"))
    assert cfg.dataset.domain == (-4 * math.pi, math.pi / 2)


@pytest.mark.parametrize("name", preset_names())
def test_preset_round_trip(name):
    cfg = load_config(f"preset:{name}")
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [FIT, NSE, SPECTRUM], ids=["fit", "nse", "spectrum"])
def test_config_round_trip(text):
    cfg = parse_config(text)
    assert parse_config(dump_config(cfg)) == cfg


def test_zero_batch_size_names_field_and_line():
    with pytest.raises(ConfigError) as err:
        parse_config(FIT.replace("batch_size: 4", "batch_size: 0"), "bad.yaml")
    msg = str(err.value)
    assert "bad.yaml:8" in msg and "train.batch_size" in msg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(FIT + "bogus: 1\n")


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        parse_config("experiment: teleport\n")


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_config("preset:no_such_thing")


# ---------------------------------------------------------------------------
# commands


def test_run_fit_cosine(workdir, capsys):
    assert cli.main(["run", write(workdir / "fit.yaml", FIT)]) == 0
    run = workdir / "runs" / "tiny_fit"
    results = json.loads((run / "results.json").read_text())
    assert results["experiment"] == "fit_cosine"
    assert set(results["seeds"]) == {"0", "1"}
    assert all("final_mse" in r for r in results["seeds"].values())
    with (run / "prediction.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "x" and len(rows) == 22
    assert (run / "config.yaml").exists()


def test_run_spectrum_gaps_file(workdir):
    assert cli.main(["run", write(workdir / "s.yaml", SPECTRUM), "--name", "spec"]) == 0
    with (workdir / "runs" / "spec" / "gaps.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert [float(r[0]) for r in rows[1:]] == [1.0, 2.0, 3.0]


def test_spectrum_command_on_model_config(workdir, capsys):
    assert cli.main(["spectrum", write(workdir / "fit.yaml", FIT)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["dimensions"]["0"]["gaps"] == [1.0]


def test_run_solve_nse(workdir):
    assert cli.main(["run", write(workdir / "nse.yaml", NSE)]) == 0
    run = workdir / "runs" / "tiny_nse"
    results = json.loads((run / "results.json").read_text())
    seed = results["seeds"]["0"]
    assert seed["final_total_loss"] > 0
    with (run / "trace.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 1 + 2
    assert set(seed["maerm"]["per_time"]) == {"u", "v", "p"}
    assert (run / "pressure_field.csv").exists()


def test_bad_config_exit_code(workdir, capsys):
    path = write(workdir / "bad.yaml", FIT.replace("batch_size: 4", "batch_size: 0"))
    assert cli.main(["run", path]) == 2
    assert "batch_size" in capsys.readouterr().err


def test_missing_config_exit_code(workdir):
    assert cli.main(["run", str(workdir / "absent.yaml")]) == 2


def test_numerical_error_exit_code(workdir, monkeypatch):
    def boom(cfg):
        raise NumericalError("singular shift system")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", write(workdir / "fit.yaml", FIT)]) == 3


def test_compare_identical(workdir, capsys):
    path = write(workdir / "fit.yaml", FIT)
    cli.main(["run", path, "--name", "a"])
    cli.main(["run", path, "--name", "b"])
    capsys.readouterr()
    out = workdir / "cmp.json"
    assert cli.main(["compare", str(workdir / "runs/a"), str(workdir / "runs/b"), "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert all(v["delta"] == 0 and v["lower"] == "tie" for v in doc["final_mse"].values())
    assert doc["median_final_mse"]["delta"] == 0


def test_compare_errors(workdir):
    cli.main(["run", write(workdir / "fit.yaml", FIT), "--name", "a"])
    cli.main(["run", write(workdir / "s.yaml", SPECTRUM), "--name", "s"])
    assert cli.main(["compare", str(workdir / "runs/a"), str(workdir / "runs/missing")]) == 2
    assert cli.main(["compare", str(workdir / "runs/a"), str(workdir / "runs/s")]) == 2


def test_output_root_flag_overrides_env(workdir):
    other = workdir / "elsewhere"
    assert cli.main(["run", write(workdir / "s.yaml", SPECTRUM), "--output-root", str(other), "--name", "x"]) == 0
    assert (other / "x" / "results.json").exists()


@pytest.mark.parametrize("text", [FIT, NSE], ids=["fit", "nse"])
def test_deterministic_replay_from_echoed_config(workdir, text):
    cli.main(["run", write(workdir / "c.yaml", text), "--name", "first"])
    echoed = workdir / "runs" / "first" / "config.yaml"
    cli.main(["run", str(echoed), "--name", "second"])
    a = json.loads((workdir / "runs/first/results.json").read_text())
    b = json.loads((workdir / "runs/second/results.json").read_text())
    assert strip_timing(a) == strip_timing(b)
