import pytest

from pathreserve.config import EXAMPLE, ConfigError, dump_config, parse_config


def test_example_parses_and_builds():
    cfg = parse_config(EXAMPLE)
    spec = cfg.build_spec()
    assert spec.n_states == 2 and (0, 1) in spec.h
    assert cfg.build_grid().n_steps == 512
    assert cfg.build_market().constant_volatility == 0.2


def test_round_trip_is_idempotent():
    once = dump_config(parse_config(EXAMPLE))
    assert dump_config(parse_config(once)) == once


def test_unknown_key_reports_field_and_line():
    with pytest.raises(ConfigError) as err:
        parse_config(EXAMPLE.replace("  mu: 0.02", "  mu: 0.02\n  colour: red"))
    path, line, _ = err.value.diagnostics[0]
    assert path == "chain.colour" and line == 10


def test_unknown_payoff_rejected():
    with pytest.raises(ConfigError):
        parse_config(EXAMPLE.replace("name: constant, params: {value: 1.0}", "name: lookback"))


def test_bad_yaml():
    with pytest.raises(ConfigError):
        parse_config("market: [unclosed")


def test_wrong_schema_version():
    with pytest.raises(ConfigError):
        parse_config(EXAMPLE.replace("pathreserve/v1", "pathreserve/v0"))


def test_premium_split():
    cfg = parse_config(EXAMPLE)
    assert cfg.build_spec(include="benefits").g == {}
    assert set(cfg.build_spec(include="premiums").g) == {0}
    assert cfg.build_spec(include="premiums").h == {}
