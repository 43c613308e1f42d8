import json

import pytest

from noahsim.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, EXIT_VERIFY, main
from noahsim.config import RunConfig, config_from_dict, load_config
from noahsim.errors import ConfigurationError
from noahsim.metrics import read_summaries
from noahsim.workload import read_trace


def write_cfg(tmp_path, **changes):
    d = RunConfig().with_(**changes).to_dict()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return path


def test_config_round_trip(tmp_path):
    cfg = RunConfig().with_(alpha=1e-3, **{"scenario.lambda_max": 7.0})
    assert load_config(write_cfg(tmp_path, alpha=1e-3, **{"scenario.lambda_max": 7.0})) == cfg


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"scenario": {"num_workers": 10, "cpus": 4}},
    {"schema_version": 99},
    {"scheduler": "round-robin"},
    {"alpha": -1.0},
])
def test_bad_configs_rejected(patch):
    d = RunConfig().to_dict()
    d.update(patch)
    with pytest.raises(ConfigurationError):
        config_from_dict(d)


def test_missing_schema_version_rejected():
    d = RunConfig().to_dict()
    del d["schema_version"]
    with pytest.raises(ConfigurationError):
        config_from_dict(d)


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = write_cfg(tmp_path, **{"scenario.lambda_max": 2.0})
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--scheduler", "best-fit", "--lambda-max", "3",
                 "--seed", "2", "--out", str(out)]) == EXIT_OK
    row = read_summaries(out / "summary.csv")[0]
    assert row["scheduler"] == "best-fit" and row["lambda_max"] == 3.0 and row["seed"] == 2
    assert len(read_trace(out / "workload.csv")) == row["events"]
    assert (out / "events.csv").read_text().count("\n") == row["events"] + 1
    assert json.loads((out / "summary.json").read_text())["summary"]["events"] == row["events"]


def test_run_is_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--lambda-max", "4", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NOAHSIM_OUTPUT", str(tmp_path / "env"))
    assert main(["run", "--lambda-max", "0"]) == EXIT_OK
    assert read_summaries(tmp_path / "env" / "summary.csv")[0]["events"] == 0


def test_sweep_cli(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--schedulers", "next-fit,noah:0.01", "--lambda-max-list", "1,2",
                 "--seeds", "1", "--out", str(out)]) == EXIT_OK
    assert len(read_summaries(out / "summary.csv")) == 4


def test_gen_workload(tmp_path):
    path = tmp_path / "trace.csv"
    assert main(["gen-workload", "--lambda-max", "2", "--out", str(path)]) == EXIT_OK
    assert read_trace(path)


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["run", "--scheduler", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["sweep", "--schedulers", "first-fit:3", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["verify", "--suite", "mm1", "--reps", "10"]) == EXIT_CONFIG
    assert main(["verify", "--suite", "nope"]) == EXIT_CONFIG
    cfg = write_cfg(tmp_path, drain_limit=0.5, **{"scenario.lambda_max": 60.0})
    assert main(["run", "--config", str(cfg), "--scheduler", "openwhisk",
                 "--out", str(tmp_path / "x")]) == EXIT_INVARIANT
    assert "invariant" in capsys.readouterr().err


def test_verify_pass_and_fail(capsys, monkeypatch):
    assert main(["verify", "--suite", "erlang,oracles"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    import noahsim.verify as v
    monkeypatch.setitem(v.SUITES, "erlang", lambda: v.verify_erlang(tol=0.0))
    assert main(["verify", "--suite", "erlang"]) == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
