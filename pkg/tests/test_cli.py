"""Command-line interface tests: artifacts, exit codes, resume, overrides."""

import json
import os

import pytest

from photonloop.cli import main
from photonloop.config import parse_config
from photonloop.correlate import load_histogram

FAST_OFF = "feedback = off\nt_p = 0.01\nM = 150\nmaster_seed = 5\n"


def write_config(tmp_path, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(FAST_OFF + extra)
    return str(path)


def read_results(outdir):
    with open(os.path.join(outdir, "results.json")) as f:
        return json.load(f)


def test_population_mode_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "pop")
    assert main(["population", "--config", cfg, "--out", out]) == 0
    res = read_results(out)
    assert res["mode"] == "population"
    assert res["M"] == 150
    assert res["master_seed"] == 5
    assert "runtime_seconds" in res and "version" in res
    assert 0.9 < res["efficiency"] <= 1.0

    with open(os.path.join(out, "population.csv")) as f:
        header = f.readline().strip()
    assert header == "t_over_gamma,excited_population,stderr"
    assert not os.path.exists(os.path.join(out, "histogram.csv"))

    echoed = parse_config((tmp_path / "pop" / "config.txt").read_text())
    assert echoed.M == 150
    assert echoed.params.pulse.t_p == 0.01
    assert not echoed.params.feedback_enabled


def test_hbt_mode_artifacts(tmp_path):
    cfg = write_config(tmp_path, "M = 400\n")
    out = str(tmp_path / "hbt")
    assert main(["hbt", "--config", cfg, "--out", out]) == 0
    res = read_results(out)
    assert res["kind"] == "hbt"
    assert {"g2", "g2_err", "A0", "AT"} <= set(res)
    t, n = load_histogram(os.path.join(out, "histogram.csv"))
    assert len(t) == len(n) and n.sum() > 0
    assert "diagnostics" in res


def test_hom_mode_reports_indistinguishability(tmp_path):
    cfg = write_config(tmp_path, "M = 400\n")
    out = str(tmp_path / "hom")
    assert main(["hom", "--config", cfg, "--out", out]) == 0
    res = read_results(out)
    assert res["kind"] == "hom"
    assert 0.0 < res["indistinguishability"] <= 1.0
    assert "indistinguishability_err" in res


def test_oracle_mode(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "oracle")
    assert main(["oracle", "--config", cfg, "--out", out]) == 0
    res = read_results(out)
    assert "oracle" in res
    assert res["oracle"]["g2"] == pytest.approx(0.003072, rel=1e-2)
    assert os.path.exists(os.path.join(out, "config.txt"))


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path)
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["hbt", "--config", cfg, "--seed", "99", "--out", out1]) == 0
    assert main(["hbt", "--config", cfg, "--seed", "99", "--jobs", "2", "--out", out2]) == 0
    r1, r2 = read_results(out1), read_results(out2)
    assert r1["master_seed"] == 99
    # same seed, different worker count: identical estimates
    assert r1["g2"] == r2["g2"]
    assert r1["A0"] == r2["A0"]
    assert r1["efficiency"] == r2["efficiency"]


def test_set_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "s")
    assert main(["population", "--config", cfg, "--set", "M=60", "--out", out]) == 0
    assert read_results(out)["M"] == 60


def test_exit_code_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, "bogus = 1\n")
    assert main(["population", "--config", cfg, "--out", str(tmp_path / "x")]) == 1
    assert "bogus" in capsys.readouterr().err

    cfg = write_config(tmp_path)
    code = main(
        ["population", "--config", cfg, "--set", "gamma_prime=-2", "--out", str(tmp_path / "y")]
    )
    assert code == 1
    assert "gamma_prime" in capsys.readouterr().err

    assert main(["population", "--config", cfg, "--set", "nonsense", "--out", "z"]) == 1


def test_exit_code_missing_config_file(tmp_path, capsys):
    code = main(
        ["population", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")]
    )
    assert code == 3
    assert "absent.cfg" in capsys.readouterr().err


def test_sweep_artifacts_and_resume(tmp_path):
    cfg_path = tmp_path / "sweep.cfg"
    cfg_path.write_text(
        "mode = sweep\nsweep_variable = t_p\nsweep_values = 0.01, 0.02\n"
        "sweep_feedback = off\nM = 120\nmaster_seed = 3\n"
    )
    out = str(tmp_path / "sw")
    assert main(["sweep", "--config", str(cfg_path), "--out", out]) == 0

    with open(os.path.join(out, "summary.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0] == "value,feedback,g2,g2_err,I,I_err,eta"
    assert len(lines) == 1 + 2  # one row per (value, setting)
    first = lines[1].split(",")
    assert float(first[0]) == 0.01
    assert first[1] == "off"

    point = os.path.join(out, "00_t_p=0.01_off")
    assert os.path.exists(os.path.join(point, "hbt", "results.json"))
    assert os.path.exists(os.path.join(point, "hom", "results.json"))

    # resume: completed points are reused and the summary is reproduced
    marker = os.path.join(point, "hbt", "results.json")
    before = os.path.getmtime(marker)
    assert main(["sweep", "--config", str(cfg_path), "--out", out]) == 0
    assert os.path.getmtime(marker) == before
    with open(os.path.join(out, "summary.csv")) as f:
        assert f.read().splitlines() == lines
