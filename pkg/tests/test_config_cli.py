import csv
import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from qpnls import cli
from qpnls.config import ConfigError, RunConfig, documented_keys, config_field_names, load_config, parse_config

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(HERE, os.pardir, "configs")

BASE = """
modes = 1
amplitudes = 0.1
lambda = 0.6180339887498949
epsilon = 1e-3
N0 = 4
N_max = 8
max_steps = 6
"""


def write(tmp_path, text, name="run.conf"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# config parsing


def test_parse_defaults():
    cfg = parse_config(BASE)
    assert cfg.d == 1 and cfg.b == 1
    assert cfg.modes == ((1,),) and cfg.lam == (0.6180339887498949,)
    assert cfg.f == (0.0, 0.0, 0.5)
    assert cfg.record_timing is False
    assert "lambda" in cfg.explicit and "alpha" not in cfg.explicit


def test_parse_two_modes():
    cfg = parse_config("modes = 1,0; 0,-2\namplitudes = 0.1, 0.2\nN0 = 3\n")
    assert cfg.d == 2 and cfg.b == 2
    assert cfg.modes == ((1, 0), (0, -2))


@pytest.mark.parametrize(
    "extra,path",
    [
        ("colour = red", "config:9:colour"),
        ("epsilon = 2", "config:9:epsilon"),
        ("alpha = x", "config:9:alpha"),
        ("just words", "config:9"),
        ("dc_filter = maybe", "config:9:dc_filter"),
    ],
)
def test_parse_errors_carry_line_and_key(extra, path):
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + extra + "\n")
    assert info.value.path == path


@pytest.mark.parametrize(
    "text,path",
    [
        ("modes = 1\namplitudes = 0\n", "amplitudes[0]"),
        ("modes = 1\namplitudes = 0.1\nlambda = 1.5\n", "lambda[0]"),
        ("modes = 1\namplitudes = 0.1, 0.2\n", "amplitudes"),
        ("modes = 1; 1\namplitudes = 0.1, 0.1\n", "modes"),
        ("modes = 1\namplitudes = 0.1\nalpha = 1\n", "alpha"),
        ("modes = 3\namplitudes = 0.1\nN0 = 3\n", "N0"),
        ("modes = 1\namplitudes = 0.1\ndc_exponent = 2\n", "dc_exponent"),
        ("modes = 1\namplitudes = 0.1\nf = 0, nan\n", "f"),
        ("amplitudes = 0.1\n", "config:modes"),
        ("modes = 1\namplitudes = 0.1\nsweep_low = 0.6\nsweep_high = 0.5\n", "sweep_low[0]"),
    ],
)
def test_validation_errors_name_field(text, path):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == path


def test_keys_documented_and_mapped():
    keys = [k for k, _ in documented_keys()]
    names = set(config_field_names())
    assert all(("lam" if k == "lambda" else k) in names for k in keys)
    assert len(keys) == len(names)


@given(st.floats(0, 1), st.floats(0, 0.01), st.integers(1, 3))
@settings(deadline=None, max_examples=30)
def test_parse_roundtrip_values(lam, eps, workers):
    cfg = parse_config(f"modes = 1\namplitudes = 0.1\nlambda = {lam!r}\nepsilon = {eps!r}\nworkers = {workers}\n")
    assert cfg.lam == (lam,) and cfg.epsilon == eps and cfg.workers == workers


def test_shipped_configs_load():
    head = load_config(os.path.join(CONFIGS, "headline.conf"))
    assert head.epsilon == 1e-3 and head.N_max == 16
    res = load_config(os.path.join(CONFIGS, "resonant.conf"))
    assert res.lam == (0.5,)


# run


def test_run_epsilon_zero(tmp_path, capsys):
    path = write(tmp_path, BASE.replace("epsilon = 1e-3", "epsilon = 0"))
    out = tmp_path / "o"
    assert cli.main(["run", "--config", path, "--out", str(out)]) == cli.EXIT_OK
    rows = read_csv(out / "trace.csv")
    assert rows[0][:3] == ["step", "N", "residual_F"] and len(rows) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verdict"] == "converged"
    assert "verdict=converged" in capsys.readouterr().out


def test_run_headline_exit_and_claims(tmp_path):
    out = tmp_path / "h"
    assert cli.main(["run", "--config", os.path.join(CONFIGS, "headline.conf"), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["claims"]["drift"] <= s["claims"]["K"] * 1e-3 * (1 + 1e-9)


def test_run_resonance_exit_two(tmp_path, capsys):
    out = tmp_path / "r"
    code = cli.main(["run", "--config", os.path.join(CONFIGS, "resonant.conf"), "--out", str(out)])
    assert code == cli.EXIT_REJECTED
    s = json.loads((out / "summary.json").read_text())
    assert s["verdict"] == "rejected" and s["violations"]
    assert "violations=" in capsys.readouterr().out


def test_run_max_steps_exit_three(tmp_path):
    two = write(tmp_path, "modes = 1; -2\namplitudes = 0.1, 0.1\nlambda = 0.41421356, 0.7320508\nepsilon = 0.05\n"
                "N0 = 3\ngrowth = 1.5\nN_max = 5\nmax_steps = 1\ngamma = 1e-4\ndiagnostics_max_dim = 0\n", "two.conf")
    assert cli.main(["run", "--config", two, "--out", str(tmp_path / "t")]) == cli.EXIT_MAX_STEPS


def test_run_trace_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = write(tmp_path, BASE)
    cli.main(["run", "--config", path, "--out", str(a)])
    cli.main(["run", "--config", path, "--out", str(b)])
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


# error exits


def test_usage_and_config_exits(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.conf")]) == cli.EXIT_USAGE
    bad = write(tmp_path, BASE + "colour = red\n")
    assert cli.main(["run", "--config", bad]) == cli.EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    no_lam = write(tmp_path, "modes = 1\namplitudes = 0.1\n", "nolam.conf")
    assert cli.main(["run", "--config", no_lam, "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--config", no_lam]) == cli.EXIT_USAGE
    assert "seed" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == cli.EXIT_USAGE


def test_help_lists_config_keys():
    text = cli.build_parser().format_help()
    for k, _ in documented_keys():
        assert k in text


# sweep


SWEEP = "modes = 1\namplitudes = 0.1\nepsilon = 1e-3\nN0 = 3\nN_max = 6\nmax_steps = 6\nsweep_samples = 6\nseed = 3\n"


def test_sweep_empty(tmp_path):
    path = write(tmp_path, SWEEP.replace("sweep_samples = 6", "sweep_samples = 0"))
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "s")]) == 0
    rows = read_csv(tmp_path / "s" / "sweep.csv")
    assert rows == [["sample", "lambda_1", "verdict", "drift", "final_residual", "decay_sum", "decay_ok", "dc_pass"]]
    s = json.loads((tmp_path / "s" / "sweep_summary.json").read_text())
    assert s["samples"] == 0 and s["success_fraction"] is None


def test_sweep_deterministic_across_workers(tmp_path):
    path = write(tmp_path, SWEEP.replace("sweep_samples = 6", "sweep_samples = 12") + "gamma = 0.2\n")
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "w2"), "--workers", "2"]) == 0
    a = (tmp_path / "w1" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "w2" / "sweep.csv").read_bytes()
    rows = read_csv(tmp_path / "w1" / "sweep.csv")[1:]
    assert len(rows) == 12
    assert {r[7] for r in rows} == {"0", "1"}
    for r in rows:
        # the pre-filter rejects every sample failing the Diophantine check
        if r[2] == "converged":
            assert r[7] == "1"
        if r[7] == "0":
            assert r[2] == "rejected"


def test_sweep_success_not_worse_for_smaller_epsilon(tmp_path):
    fr = []
    for eps in ("1e-3", "1e-4"):
        path = write(tmp_path, SWEEP.replace("epsilon = 1e-3", f"epsilon = {eps}"), f"s{eps}.conf")
        cli.main(["sweep", "--config", path, "--out", str(tmp_path / eps)])
        fr.append(json.loads((tmp_path / eps / "sweep_summary.json").read_text())["success_fraction"])
    assert fr[1] >= fr[0]


# filter


def test_filter_outputs(tmp_path):
    path = write(tmp_path, "modes = 1\namplitudes = 0.1\ngamma = 0.05\nN_max = 8\nsweep_samples = 50\nseed = 1\n")
    assert cli.main(["filter", "--config", path, "--out", str(tmp_path / "f")]) == 0
    rows = read_csv(tmp_path / "f" / "filter.csv")
    assert rows[0] == ["sample", "lambda_1", "pass", "worst_divisor", "worst_n", "worst_k"]
    assert len(rows) == 51
    s = json.loads((tmp_path / "f" / "kept_intervals.json").read_text())
    assert s["intervals"]["fine_grid_violations"] == 0
    assert 0 <= s["pass_fraction"] <= 1
    again = tmp_path / "g"
    cli.main(["filter", "--config", path, "--out", str(again)])
    assert (again / "filter.csv").read_bytes() == (tmp_path / "f" / "filter.csv").read_bytes()


# verify and report


@pytest.mark.parametrize("suite", ["gevrey-norms", "resolvent", "neumann", "markov", "partition"])
def test_verify_suites_pass(suite, tmp_path):
    assert cli.main(["verify", suite, "--trials", "10", "--seed", "1", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / f"verify_{suite}.json").read_text())
    assert data[suite]["violations"] == 0


def test_verify_unknown_suite():
    assert cli.main(["verify", "nonsense"]) == cli.EXIT_USAGE


def test_report(tmp_path, capsys):
    path = write(tmp_path, BASE)
    out = tmp_path / "rep"
    cli.main(["run", "--config", path, "--out", str(out)])
    capsys.readouterr()
    assert cli.main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "== summary.json" in text and "verdict: converged" in text
    assert cli.main(["report", "--out", str(tmp_path / "nothing")]) == cli.EXIT_USAGE


def test_default_config_is_valid():
    RunConfig().validate()
