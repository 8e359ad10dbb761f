import json

import pandas as pd
import pytest

from healthdyn.cli import (EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_NUMERICAL, EXIT_OK, load_config, run)
from healthdyn.errors import ConfigError
from healthdyn.io import file_sha256

SMALL = """[run]
seed = 3
[data]
n_persons = 4000
[health]
n_paths = 20000
[model]
grid = reduced
[estimate]
n_histories = 300
n_starts = 1
max_cycles = 1
max_evals = 12
[simulate]
n_histories = 500
[shock]
n_histories = 300
[decompose]
n_histories = 300
[wtp]
tau_shocks = 0.1,0.9
[inequality]
n_histories = 300
"""

PIPELINE = ("gen-data", "fit-index", "fit-health", "fit-earnings", "fit-wealth", "solve", "estimate",
            "simulate", "shock", "decompose", "wtp", "inequality", "report")


@pytest.fixture(scope="session")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.ini"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("run")
    codes = {c: run([c, "-c", str(small_config), "--out", str(out), "--threads", "1"]) for c in PIPELINE}
    return out, codes


def test_pipeline_runs(pipeline):
    _, codes = pipeline
    assert codes == {c: EXIT_OK for c in PIPELINE}


def test_manifest_hashes_match(pipeline):
    out, _ = pipeline
    for c in PIPELINE:
        m = json.loads((out / c / "manifest.json").read_text())
        assert m["subcommand"] == c and m["seed"] == 3
        assert m["outputs"]
        for entry in m["inputs"] + m["outputs"]:
            assert file_sha256(out / entry["path"]) == entry["sha256"]


def test_report_collects_everything(pipeline):
    out, _ = pipeline
    idx = pd.read_csv(out / "report" / "index.csv")
    assert (idx.status == "ok").all(), idx[idx.status != "ok"]


def test_rerun_is_skipped_until_something_changes(pipeline, small_config, capsys):
    out, _ = pipeline
    args = ["fit-wealth", "-c", str(small_config), "--out", str(out), "--threads", "1"]
    assert run(args) == EXIT_OK
    assert "up to date" in capsys.readouterr().out
    assert run(args + ["--force"]) == EXIT_OK
    assert "wrote" in capsys.readouterr().out
    m = json.loads((out / "fit-wealth" / "manifest.json").read_text())
    target = out / m["outputs"][0]["path"]
    target.write_text(target.read_text() + "\n")
    assert run(args) == EXIT_OK
    assert "wrote" in capsys.readouterr().out
    assert run(args + ["--set", "wealth.order=2"]) == EXIT_OK
    assert "wrote" in capsys.readouterr().out


def test_missing_seed(tmp_path, capsys):
    assert run(["gen-data", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "run.seed is required" in capsys.readouterr().err


def test_unknown_key(tmp_path, capsys):
    assert run(["gen-data", "--seed", "1", "--out", str(tmp_path), "--set", "data.persons=5"]) == EXIT_CONFIG
    assert "data.persons" in capsys.readouterr().err


def test_bad_value(tmp_path, capsys):
    assert run(["gen-data", "--seed", "1", "--out", str(tmp_path), "--set", "data.n_persons=many"]) == EXIT_CONFIG
    assert "cannot parse" in capsys.readouterr().err


def test_missing_upstream(tmp_path, capsys):
    assert run(["solve", "--seed", "1", "--out", str(tmp_path)]) == EXIT_DEPENDENCY
    err = capsys.readouterr().err
    assert "fit-health" in err and "first" in err


def test_numerical_failure(pipeline, small_config, tmp_path, capsys):
    out, _ = pipeline
    for c in ("gen-data", "fit-index"):
        (tmp_path / c).mkdir()
        for f in (out / c).iterdir():
            (tmp_path / c / f.name).write_bytes(f.read_bytes())
    code = run(["fit-health", "-c", str(small_config), "--out", str(tmp_path), "--set", "health.n_paths=100"])
    assert code == EXIT_NUMERICAL
    assert "fewer than" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nseed = 4\noutput_dir = from_file\n[data]\nn_persons = 10\n")
    env = {"HEALTHDYN_OUTPUT_DIR": "from_env"}
    assert load_config(None, ["run.seed=1"], env)["run.output_dir"] == "from_env"
    cfg = load_config(str(ini), ["data.n_persons=20"], env)
    assert cfg["run.output_dir"] == "from_file" and cfg["data.n_persons"] == 20 and cfg["run.seed"] == 4
    assert load_config(str(ini), [], {})["estimate.bounds.gamma"] == (0.2, 0.6)
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"), [], {})
    with pytest.raises(ConfigError):
        load_config(None, ["run.seed=1", "model.grid=huge"], {})
