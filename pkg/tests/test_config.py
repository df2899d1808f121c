import pytest
from hypothesis import given, strategies as st

from reglap.config import (CHECK_NAMES, ConfigError, RunConfig, config_hash, parse_config,
                           parse_config_text, write_config)


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config_text(write_config(cfg)) == cfg


@given(st.floats(0.01, 0.99), st.integers(4, 4096), st.floats(1e-4, 1.0),
       st.sampled_from(["burgers", "advection", "zero"]),
       st.sampled_from(["threshold", "porous", "two_plateau", "linear", "zero"]),
       st.booleans())
def test_written_config_parses_back_identically(s, n, eps, flux, deg, timing):
    text = (f"[problem]\ns = {s!r}\nn_cells = {n}\nflux = {flux}\ndegeneracy = {deg}\n"
            f"[solver]\neps = {eps!r}\n[verify]\nrecord_timing = {str(timing).lower()}\n")
    cfg = parse_config_text(text)
    again = parse_config_text(write_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_every_error_is_reported_with_its_line():
    text = "[problem]\ns = 1.5\nfoo = 3\n[solver]\ncfl = 2\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, "run.ini")
    errs = exc.value.errors
    assert "[problem] s (run.ini:2): must lie in the open interval (0, 1)" in errs
    assert "[problem] foo (run.ini:3): unknown key" in errs
    assert "[solver] cfl (run.ini:5): must lie in the open interval (0, 1)" in errs
    assert any(e.startswith("[extra] (run.ini:6): unknown section") for e in errs)


def test_type_errors_are_collected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[problem]\nn_cells = many\n[verify]\nrecord_timing = maybe\n")
    assert len(exc.value.errors) == 2


def test_syntax_error():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("no section header\n")
    assert exc.value.errors[0].startswith("syntax:")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(tmp_path / "nope.ini")
    assert "no such file" in exc.value.errors[0]


def test_sweep_mode_from_eps_list():
    assert parse_config_text("[solver]\neps_list = 0.1, 0.05, 0.025\n").sweep_mode
    assert not parse_config_text("[solver]\neps_list =\n").sweep_mode
    with pytest.raises(ConfigError):
        parse_config_text("[solver]\neps_list = 0.1, 0.2, 0.3\n")
    with pytest.raises(ConfigError):
        parse_config_text("[solver]\neps_list = 0.1, 0.05\n")


def test_check_selection():
    assert parse_config_text("[verify]\nchecks = all\n").verify.checks == CHECK_NAMES
    assert parse_config_text("[verify]\nchecks = entropy, sweep\n").verify.checks == ("entropy", "sweep")
    with pytest.raises(ConfigError):
        parse_config_text("[verify]\nchecks = entropy, magic\n")


def test_boundary_values_follow_riemann_states():
    cfg = parse_config_text("[problem]\nu_left = 0.2\nu_right = 0.9\n")
    assert (cfg.problem.ub_left, cfg.problem.ub_right) == (0.2, 0.9)
    cfg = parse_config_text("[problem]\nu_left = 0.2\nub_left = 0.5\n")
    assert cfg.problem.ub_left == 0.5


@pytest.mark.parametrize("initial", ["riemann", "constant", "sine", "bump"])
def test_initial_fields_have_grid_shape(initial):
    cfg = parse_config_text(f"[problem]\ninitial = {initial}\nn_cells = 32\n")
    u = cfg.initial_field()
    assert u.shape == (32,)
    assert (cfg.initial_field(shift=0.5) - u == pytest.approx(0.5))


def test_time_dependent_boundary():
    cfg = parse_config_text("[problem]\nub_amplitude = 0.1\nub_frequency = 2\n")
    ub = cfg.boundary_data()
    assert ub(0.125)[0] == pytest.approx(1.1)
    assert ub(0.125)[1] == pytest.approx(0.1)


def test_hash_changes_with_content():
    assert config_hash(RunConfig()) != config_hash(parse_config_text("[problem]\ns = 0.6\n"))
