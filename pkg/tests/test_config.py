"""Config parsing tests: defaults, errors with locations, echo round trip."""

import math

import pytest

from photonloop.config import (
    ConfigError,
    default_sweep_values,
    log_grid,
    parse_config,
)


def test_defaults_materialize():
    cfg = parse_config("mode = hbt\n")
    p = cfg.params
    assert p.gamma == 1.0
    assert p.tau == 0.1
    assert p.N == 20
    assert p.phi == 0.0
    assert p.pulse.t_p == 0.1
    assert p.pulse.area == pytest.approx(math.pi)
    assert p.n_max == 2
    assert p.T == 20.0
    assert p.feedback_enabled is True
    assert p.dt == pytest.approx(0.005)
    assert cfg.M == 20000
    assert cfg.master_seed == 2024
    assert cfg.parallelism == 1
    assert cfg.mode == "hbt"


def test_comments_and_blank_lines_ignored():
    text = """
# correlation run
mode = hom   # inline note
t_p = 0.05

M = 500
"""
    cfg = parse_config(text)
    assert cfg.mode == "hom"
    assert cfg.params.pulse.t_p == 0.05
    assert cfg.M == 500


def test_unknown_key_reports_name_and_line():
    with pytest.raises(ConfigError, match=r"'bogus' \(line 2\): unknown key"):
        parse_config("mode = hbt\nbogus = 3\n")


def test_missing_mode_is_an_error():
    with pytest.raises(ConfigError, match=r"'mode'.*missing required key"):
        parse_config("t_p = 0.1\n")


def test_bad_value_type_reports_key_and_line():
    with pytest.raises(ConfigError, match=r"key 't_p'.*line 2"):
        parse_config("mode = hbt\nt_p = narrow\n")
    with pytest.raises(ConfigError, match=r"key 'M'"):
        parse_config("mode = hbt\nM = 12.5\n")


def test_constraint_violations_report_key():
    with pytest.raises(ConfigError, match="gamma"):
        parse_config("mode = hbt\ngamma = -1\n")
    with pytest.raises(ConfigError, match="mode"):
        parse_config("mode = lifetime\n")
    with pytest.raises(ConfigError, match="M"):
        parse_config("mode = hbt\nM = 0\n")
    # too-coarse time step is caught at parameter construction
    with pytest.raises(ConfigError, match="coarse"):
        parse_config("mode = hbt\ntau = 0.5\nN = 10\n")


def test_malformed_line_reports_location():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("mode = hbt\nthis is not a setting\n")


def test_overrides_take_precedence():
    cfg = parse_config("mode = hbt\nt_p = 0.1\n", overrides={"t_p": "0.02", "M": "64"})
    assert cfg.params.pulse.t_p == 0.02
    assert cfg.M == 64
    with pytest.raises(ConfigError, match=r"'gamma_prime'.*override"):
        parse_config("mode = hbt\n", overrides={"gamma_prime": "-0.5"})


def test_echo_round_trip():
    text = "mode = hom\nt_p = 0.03\ngamma_prime = 0.25\ntau = 0.04\nN = 8\nM = 777\n"
    cfg = parse_config(text)
    echoed = parse_config(cfg.echo())
    assert echoed.mode == cfg.mode
    assert echoed.params == cfg.params
    assert echoed.M == cfg.M
    assert echoed.master_seed == cfg.master_seed
    assert echoed.sweep_values == cfg.sweep_values
    assert "photonloop" in cfg.echo().splitlines()[0]


def test_log_grid_spacing():
    g = log_grid(0.01, 0.5)
    assert g[0] == pytest.approx(0.01)
    assert g[-1] == pytest.approx(0.5)
    ratios = [b / a for a, b in zip(g, g[1:])]
    assert all(r == pytest.approx(ratios[0], rel=1e-9) for r in ratios)
    # about six points per decade, endpoints exact
    assert len(g) == round(6 * math.log10(50)) + 1
    assert ratios[0] == pytest.approx(50 ** (1 / (len(g) - 1)), rel=1e-9)


def test_default_sweep_grids():
    tp = default_sweep_values("t_p")
    assert tp[0] == pytest.approx(0.01) and tp[-1] == pytest.approx(0.5)
    assert len(tp) == 11
    g0 = default_sweep_values("gamma0")
    assert g0[0] == 0.0 and g0[-1] == pytest.approx(0.5)
    gp = default_sweep_values("gamma_prime")
    assert gp[0] == 0.0 and gp[-1] == pytest.approx(1.0)
    for var in ("phi", "tau"):
        with pytest.raises(ConfigError, match="sweep_values"):
            default_sweep_values(var)


def test_sweep_config():
    text = (
        "mode = sweep\nsweep_variable = t_p\n"
        "sweep_values = 0.01, 0.02, 0.05\nsweep_feedback = both\nM = 100\n"
    )
    cfg = parse_config(text)
    assert cfg.sweep_variable == "t_p"
    assert cfg.sweep_values == [0.01, 0.02, 0.05]
    assert cfg.sweep_feedback == "both"

    cfg = parse_config("mode = sweep\nsweep_variable = gamma0\nM = 10\n")
    assert cfg.sweep_values == default_sweep_values("gamma0")

    with pytest.raises(ConfigError, match="sweep_variable"):
        parse_config("mode = sweep\nM = 10\n")
    with pytest.raises(ConfigError, match="sweep_variable"):
        parse_config("mode = sweep\nsweep_variable = dt\n")
    with pytest.raises(ConfigError, match="sweep_feedback"):
        parse_config(
            "mode = sweep\nsweep_variable = t_p\nsweep_feedback = sometimes\n"
        )
    # phi sweeps have no default grid: explicit values required
    with pytest.raises(ConfigError, match="sweep_values"):
        parse_config("mode = sweep\nsweep_variable = phi\n")
