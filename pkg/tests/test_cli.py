import json
import os
import subprocess
import sys

import numpy as np
import pytest

from apsest.cli import main
from apsest.forward_model import load_operator, vectorize
from apsest.synthesis import ApsModelConfig, ChannelSimConfig, sample_aps, simulate_sample_covariance, true_covariance

SMALL_TOML = """
schema_version = 1
name = "tiny"
num_trials = 3
master_seed = 5
dataset_size = 40
iterations = 15

[array]
num_antennas = 4

[grid]
num_points = 20

[aps_train]
spread_rad = 0.1

[channel]
num_snapshots = 100

[[algorithms]]
name = "POCS"
kind = "pocs"

[[algorithms]]
name = "Haugazeau"
kind = "haugazeau"

[[algorithms]]
name = "NNLS-1"
kind = "regularized"
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_generate_dataset_byte_identical(workdir):
    for out in ("a.csv", "b.csv"):
        assert main(["generate-dataset", "--count", "1000", "--seed", "7", "--out", out]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert (workdir / "a.csv").read_text().count("\n") == 1000
    meta_a = json.loads((workdir / "a.csv.meta.json").read_text())
    meta_b = json.loads((workdir / "b.csv.meta.json").read_text())
    assert meta_a == meta_b and meta_a["seed"] == 7


@pytest.fixture
def pipeline(workdir):
    assert main(["generate-dataset", "--count", "200", "--seed", "1", "--out", "ds.csv"]) == 0
    assert main(["compute-stats", "--dataset", "ds.csv", "--out", "stats"]) == 0
    assert main(["build-operator", "--out", "op.bin"]) == 0
    op = load_operator(workdir / "op.bin")
    rng = np.random.default_rng(0)
    truth = sample_aps(ApsModelConfig(), op.grid, rng)
    r = vectorize(simulate_sample_covariance(true_covariance(op, truth), ChannelSimConfig(), rng))
    np.savetxt(workdir / "r.csv", r, delimiter=",")
    np.savetxt(workdir / "truth.csv", truth, delimiter=",")
    return workdir


@pytest.mark.parametrize("algorithm", ["haugazeau", "regularized", "pocs"])
def test_estimate_writes_nonnegative_aps(pipeline, capsys, algorithm):
    code = main(["estimate", "--operator", "op.bin", "--covariance", "r.csv", "--stats", "stats",
                 "--algorithm", algorithm, "--gamma", "5", "--truth", "truth.csv", "--trace", "trace.csv"])
    assert code == 0
    est = np.loadtxt(pipeline / "aps_estimate.csv")
    assert est.shape == (180,) and np.all(est >= 0)
    info = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert info["algorithm"] == algorithm and info["nmse"] < 1.0
    if algorithm != "regularized":
        header = (pipeline / "trace.csv").read_text().splitlines()[0]
        if algorithm == "haugazeau":
            assert header == "iteration,nmse_if_truth_known,feasibility_residual,fixed_point_gap,elapsed_ms"


def test_operator_csv_format(workdir):
    assert main(["build-operator", "--num-antennas", "3", "--num-points", "10", "--out", "op.csv"]) == 0
    text = (workdir / "op.csv").read_text().splitlines()
    assert text[0].startswith("# num_antennas=3") and len(text) == 1 + 5
    assert load_operator(workdir / "op.csv").shape == (5, 10)


def test_errors_exit_nonzero(pipeline, capsys):
    assert main(["estimate", "--operator", "op.bin", "--covariance", "truth.csv"]) == 2
    assert "expects 31" in capsys.readouterr().err
    assert main(["estimate", "--operator", "op.bin", "--covariance", "r.csv"]) == 2
    assert "--stats is required" in capsys.readouterr().err
    assert main(["compute-stats", "--dataset", "missing.csv"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["estimate"])
    assert exc.value.code != 0


def test_config_errors_cite_location(workdir, capsys):
    (workdir / "bad.toml").write_text("name = 'x'\nnum_trials = = 3\n")
    assert main(["run-experiment", "--config", "bad.toml"]) == 2
    assert "line" in capsys.readouterr().err
    (workdir / "bad2.toml").write_text("[[algorithms]]\nkind = 'nope'\n")
    assert main(["run-experiment", "--config", "bad2.toml"]) == 2
    assert "algorithms[0].kind" in capsys.readouterr().err


def test_run_experiment_outputs(workdir):
    (workdir / "tiny.toml").write_text(SMALL_TOML)
    assert main(["run-experiment", "--config", "tiny.toml", "--out", "res", "--trace"]) == 0
    header = (workdir / "res" / "results.csv").read_text().splitlines()[0]
    assert header == "algorithm,iteration,mean_nmse,stderr_nmse,mean_feasibility_residual"
    wide = (workdir / "res" / "curves.csv").read_text().splitlines()
    assert wide[0] == "iteration,POCS,Haugazeau,NNLS-1" and len(wide) == 16
    assert (workdir / "res" / "traces" / "Haugazeau.csv").exists()
    # defaults to the config's output_dir (its name here)
    assert main(["run-experiment", "--config", "tiny.toml", "--trials", "2", "--seed", "3"]) == 0
    assert (workdir / "tiny" / "results.csv").exists()


def test_run_experiment_threads_identical(workdir):
    (workdir / "tiny.toml").write_text(SMALL_TOML)
    assert main(["run-experiment", "--config", "tiny.toml", "--out", "t1", "--threads", "1"]) == 0
    assert main(["run-experiment", "--config", "tiny.toml", "--out", "t2", "--threads", "2"]) == 0
    assert (workdir / "t1" / "results.csv").read_bytes() == (workdir / "t2" / "results.csv").read_bytes()


def test_oracle_command(capsys):
    assert main(["oracle", "--count", "2", "--seed", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_module_entry_point(workdir):
    out = subprocess.run([sys.executable, "-m", "apsest", "--help"], capture_output=True, text=True,
                         env={**os.environ})
    assert out.returncode == 0
    for cmd in ("generate-dataset", "build-operator", "estimate", "run-experiment", "oracle"):
        assert cmd in out.stdout
