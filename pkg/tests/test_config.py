from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ciser_dtn.sim.config import (
    KIB,
    ConfigInvalid,
    SimConfig,
    config_from_mapping,
    config_hash,
    dump_config,
    load_config,
    parse_value,
)


def test_defaults_follow_full_scale_scenario():
    cfg = SimConfig()
    assert cfg.n_nodes == 160 and cfg.area == (8000.0, 8000.0)
    assert cfg.sim_duration == 12 * 3600 and cfg.ttl == 300 * 60
    assert cfg.tx_speed * 8 == 250_000
    assert cfg.message_size == (500 * KIB, 1024 * KIB)
    assert cfg.scan_interval == 10.0


def test_trace_mode_scan_default():
    cfg = SimConfig(connectivity="trace:x.csv")
    assert cfg.scan_interval == 120.0 and cfg.trace_path == "x.csv"


def test_validation_reports_every_field():
    with pytest.raises(ConfigInvalid) as info:
        SimConfig(n_nodes=0, node_speed=(3.0, 1.0), tx_range=9000.0, rho=2.0, policy="spray")  # type: ignore[arg-type]
    text = " ".join(info.value.problems)
    for name in ("n_nodes", "node_speed", "tx_range", "rho", "policy"):
        assert name in text


def test_message_larger_than_buffer_rejected():
    with pytest.raises(ConfigInvalid, match="buffer_capacity"):
        SimConfig(buffer_capacity=1000, message_size=(10, 2000))


def test_parse_value_forms():
    assert parse_value("area", "2000x1500") == (2000.0, 1500.0)
    assert parse_value("message_size", "10, 20") == (10, 20)
    assert parse_value("scan_interval", "auto") is None
    assert parse_value("policy", "SIR") == "sir"
    with pytest.raises(ValueError):
        parse_value("n_nodes", "2.5")
    with pytest.raises(ValueError):
        parse_value("wait_time", "1")


def test_unknown_and_duplicate_keys(tmp_path):
    with pytest.raises(ConfigInvalid, match="unknown key"):
        config_from_mapping({"speed": "3"})
    path = tmp_path / "dup.cfg"
    path.write_text("n_nodes = 4\nn_nodes = 5\n")
    with pytest.raises(ConfigInvalid, match="duplicate"):
        load_config(path)
    path.write_text("n_nodes 4\n")
    with pytest.raises(ConfigInvalid, match=":1:"):
        load_config(path)


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("n_nodes = 20  # comment\nseed = 3\narea = 1000,1000\n")
    cfg = load_config(path, {"seed": "9"})
    assert cfg.n_nodes == 20 and cfg.seed == 9


def test_dump_load_round_trip(tmp_path):
    cfg = SimConfig(n_nodes=33, area=(1234.5, 999.0), policy="sir", contact_miss=0.1)
    path = tmp_path / "round.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_hash_ignores_seed_and_policy_only():
    cfg = SimConfig()
    assert config_hash(cfg) == config_hash(cfg.replace(seed=5, policy="sir"))
    assert config_hash(cfg) != config_hash(cfg.replace(ttl=100.0))
    assert len(config_hash(cfg)) == 16


@given(st.integers(1, 500), st.floats(200.0, 1e4), st.floats(0.0, 1.0))
def test_dump_round_trip_property(n, side, rho):
    cfg = SimConfig(n_nodes=n, area=(side, side), rho=rho)
    values = dict(
        line.split(" = ", 1) for line in dump_config(cfg).splitlines()
    )
    assert config_from_mapping(values) == cfg
