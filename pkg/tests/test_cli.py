import json
import shutil
import subprocess
import sys

import pytest
import tomli_w

from aggiv.cli import main
from aggiv.config import parse_config, scm_from_config, scm_to_config, write_config
from aggiv.dataset import Dataset
from aggiv.scm import AggregateIvScm

BASE = AggregateIvScm(alpha=[1, 1], beta=[1, 2], delta=[[1, 1]], gamma_a=[1, 1], gamma_y=1)


def write(tmp_path, cfg, name="model.toml"):
    path = tmp_path / name
    write_config(cfg, path)
    return str(path)


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_experiment_happy_path(tmp_path, capsys):
    assert main(["experiment", "figure2a", "--seed", "42", "--out", str(tmp_path), "--sizes", "10"]) == 0
    assert (tmp_path / "figure2a" / "results.csv").exists()
    assert (tmp_path / "figure2a" / "manifest.json").exists()


def test_out_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("AGGIV_OUT", str(tmp_path / "env"))
    assert main(["experiment", "table1"]) == 0
    assert (tmp_path / "env" / "table1" / "results.csv").exists()


def test_same_seed_same_artifacts(tmp_path):
    for sub in ("x", "y"):
        main(["experiment", "figure2b", "--seed", "3", "--grid", "0:1:0.5", "--out", str(tmp_path / sub)])
    assert (tmp_path / "x/figure2b/results.csv").read_bytes() == (tmp_path / "y/figure2b/results.csv").read_bytes()


def test_degenerate_weights_exit_3(tmp_path, capsys):
    cfg = {"alpha": [0.0, 0.0], "beta": [1.0, 2.0], "delta": [[1.0, 1.0]]}
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 3
    err = error_line(capsys)
    assert err["exit"] == 3 and "degenerate aggregate" in err["message"]


def test_equivalence_needs_unit_variances(tmp_path, capsys):
    cfg = scm_to_config(BASE)
    cfg["var_y"] = 2.0
    assert main(["equivalence", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    assert "standard Gaussian" in error_line(capsys)["message"]


def test_equivalence_round_trip(tmp_path, capsys):
    assert main(["equivalence", "--config", write(tmp_path, scm_to_config(BASE)), "--out", str(tmp_path)]) == 0
    mapped = tmp_path / "equivalence" / "equivalent.toml"
    assert parse_config(mapped.read_text())["model"] == "exclusion_violation"
    assert main(["simulate", "--config", str(mapped), "--n", "50", "--out", str(tmp_path)]) == 0
    assert Dataset.from_csv(tmp_path / "simulate" / "observational.csv").columns == ("i1", "u", "a", "y")


@pytest.mark.parametrize(
    "argv",
    [["experiment", "nonsense"], ["simulate"], ["estimate", "--data"], ["experiment", "table1", "--seed", "x"]],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert error_line(capsys)["exit"] == 2


def test_unparseable_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = [1, 1\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert error_line(capsys)["error"] == "config"


def test_declared_dimension_mismatch(tmp_path):
    cfg = scm_to_config(BASE)
    cfg["k"] = 3
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 3


def test_validate_reports_acid(tmp_path, capsys):
    cfg = scm_to_config(BASE)
    cfg["acid"] = {"kind": "gaussian", "d": [2.0, -1.0]}
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert "ok scm" in out and out.count("pass ") == 4
    cfg["acid"] = {"kind": "gaussian", "d": [1.0, 1.0]}
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 3
    assert "FAIL slopes" in capsys.readouterr().out


def test_simulate_then_estimate(tmp_path, capsys):
    path = write(tmp_path, scm_to_config(BASE))
    assert main(["simulate", "--config", path, "--n", "2000", "--seed", "1", "--out", str(tmp_path)]) == 0
    data = tmp_path / "simulate" / "observational.csv"
    capsys.readouterr()
    assert main(["estimate", "--data", str(data), "--out", str(tmp_path)]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header == "estimate,f_stat,n,instruments"
    estimate, f_stat, n, inst = row.split(",")
    assert abs(float(estimate) - 1.5) < 0.3 and n == "2000" and inst == "i1"
    assert (tmp_path / "estimate" / "estimate.csv").read_text().splitlines()[1] == row


def test_estimate_unknown_column(tmp_path, capsys):
    path = write(tmp_path, scm_to_config(BASE))
    main(["simulate", "--config", path, "--n", "20", "--out", str(tmp_path)])
    data = str(tmp_path / "simulate" / "observational.csv")
    assert main(["estimate", "--data", data, "--instruments", "i9", "--out", str(tmp_path)]) == 2


def test_estimate_numeric_failure(tmp_path, capsys):
    Dataset(("i1", "a", "y"), [[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 3.0, 3.0], [1.0, 4.0, 1.0]]).to_csv(
        tmp_path / "d.csv")
    assert main(["estimate", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path)]) == 4
    assert error_line(capsys)["error"] == "numerical"


def test_acid_subcommand(tmp_path, capsys):
    cfg = scm_to_config(BASE)
    cfg["acid"] = {"kind": "instrument_tuned"}
    assert main(["acid", "--config", write(tmp_path, cfg), "--a", "2", "--n", "10", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "ace,1.5" and lines[1] == "beta_iv,1.5"
    data = Dataset.from_csv(tmp_path / "acid" / "interventional.csv")
    assert data.meta == {"a": 2.0} and data.columns == ("a1", "a2")


def test_acid_out_of_support(tmp_path, capsys):
    cfg = scm_to_config(BASE)
    cfg["acid"] = {"kind": "counterexample"}
    assert main(["acid", "--config", write(tmp_path, cfg), "--a", "2.5", "--n", "10"]) == 3


def test_sargan_subcommand(tmp_path, capsys):
    cfg = {"alpha": [1.0, 1.0], "beta": [-1.0, 2.0], "delta": [[5.0, 3.0], [4.0, 2.0]],
           "gamma_a": [0.5, 0.5], "gamma_y": 2.0}
    assert main(["sargan", "--config", write(tmp_path, cfg), "--n", "1000", "--level", "0.01"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header == "statistic,dof,p_value,reject,level"
    assert row.split(",")[1] == "1" and row.split(",")[3] == "1"


def test_config_round_trip():
    cfg = scm_to_config(BASE)
    assert scm_to_config(scm_from_config(parse_config(tomli_w.dumps(cfg)))) == cfg


@pytest.mark.skipif(shutil.which("aggiv") is None, reason="console script not on PATH")
def test_console_script(tmp_path):
    proc = subprocess.run(["aggiv", "experiment", "table1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "aggiv", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("aggiv ")
