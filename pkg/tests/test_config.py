from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from codipas.config import (
    ConfigError, config_from_dict, config_to_dict, dump_config, load_config, parse_matrix, with_overrides,
)

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))

BASE = {
    "game": {"matrix": [[5, 2], [1, 3]], "constant_c": 6, "noise": {"kind": "uniform", "lo": -1, "hi": 1}},
    "players": {"p1": {"scheme": "CRL1"}, "p2": {"scheme": "RL2", "initial_strategy": [0.25, 0.75]}},
    "run": {"horizon": 100, "seeds": [0, 1], "record_stride": 5},
    "output": {"directory": "out/x", "plots": True},
}


def doc(**patch):
    d = yaml.safe_load(yaml.safe_dump(BASE))
    for path, value in patch.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return d


def test_shipped_configs_present():
    names = {p.name for p in CONFIGS}
    assert {"crl1_selfplay.cfg", "crl1_vs_rl2.cfg"} <= names


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    assert config_to_dict(again) == config_to_dict(cfg)
    assert dump_config(again) == dump_config(cfg)


def test_round_trip_keeps_float_bits():
    d = doc(players__p1__initial_strategy=[0.1, 0.9], game__constant_c=6.000000000000001)
    cfg = config_from_dict(d)
    back = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert back.constant_c == 6.000000000000001
    assert back.p1.initial_strategy == (0.1, 0.9)


@given(st.floats(1e-3, 10, allow_subnormal=False), st.floats(0.51, 1.0), st.floats(0.1, 100))
def test_schedule_round_trip_property(eps, rho, cp):
    d = doc(players__p1__epsilon=eps, players__p1__mu={"family": "R4", "rho": rho, "c_prime": cp},
            players__p2__lam={"family": "scaled", "k": 0.5, "base": {"family": "R4", "rho": rho, "c_prime": cp}})
    cfg = config_from_dict(d)
    assert config_from_dict(yaml.safe_load(dump_config(cfg))) == cfg


@pytest.mark.parametrize("patch", [
    {"extra": 1},
    {"game__colour": "red"},
    {"game__noise__sigma": 1},
    {"players__p3": {}},
    {"players__p1__lr": 0.1},
    {"players__p1__lam": {"family": "R1", "rho": 0.7}},
    {"run__steps": 10},
    {"output__format": "png"},
    {"ode": {"system": "replicator", "order": 4}},
])
def test_unknown_keys_rejected(patch):
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict(doc(**patch))


@pytest.mark.parametrize("patch,msg", [
    ({"game__matrix": [[1, 2], [3]]}, "different lengths"),
    ({"game__matrix": []}, "non-empty"),
    ({"game__matrix": [[1, "x"]]}, "number"),
    ({"game__constant_c": 0}, "raise the constant c"),
    ({"game__noise": {"kind": "gaussian"}}, "noise"),
    ({"run__horizon": 0}, "horizon"),
    ({"run__horizon": 1.5}, "integer"),
    ({"run__record_stride": 0}, "record_stride"),
    ({"run__seeds": []}, "seed"),
    ({"run__seeds": "abc"}, "seeds"),
    ({"players__p1__scheme": "CRL7"}, "CRL7"),
    ({"players__p1__epsilon": 0}, "epsilon"),
    ({"players__p1__epsilon": float("nan")}, "finite"),
    ({"players__p1__mu": {"family": "R4", "rho": 0.4}}, "rho"),
    ({"players__p1__lam": {"family": "R9"}}, "family"),
    ({"players__p1__initial_strategy": [0.5, 0.6]}, "sums to 1.1"),
    ({"players__p1__initial_estimates": [0.0]}, "estimates"),
    ({"output__plots": "maybe"}, "true/false"),
    ({"ode": {"system": "lotka"}}, "valid names"),
    ({"ode": {"system": "replicator", "dt": 0}}, "dt"),
    ({"ode": {"system": "replicator", "clock": "p3"}}, "clock"),
])
def test_invalid_values_rejected(patch, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(doc(**patch))


def test_not_a_mapping():
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
    with pytest.raises(ConfigError, match="game"):
        config_from_dict({"run": {"horizon": 5}})


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("game: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(p)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.cfg")


def test_parse_matrix():
    assert parse_matrix([[1, 2], [3, 4.5]]) == ((1.0, 2.0), (3.0, 4.5))
    with pytest.raises(ConfigError):
        parse_matrix([[float("inf")]])


def test_overrides_take_precedence():
    cfg = config_from_dict(doc())
    new = with_overrides(cfg, horizon=7, seeds=[9], epsilon=0.2, out_dir="elsewhere", plots=False)
    assert (new.horizon, new.seeds, new.out_dir, new.plots) == (7, (9,), "elsewhere", False)
    assert new.p1.learner.epsilon == new.p2.learner.epsilon == 0.2
    with pytest.raises(ConfigError):
        with_overrides(cfg, horizon=0)


def test_config_builds_experiment():
    cfg = config_from_dict(doc())
    exp = cfg.experiment()
    assert exp.horizon == 100 and exp.seeds == (0, 1) and exp.record_stride == 5
    np.testing.assert_array_equal(exp.initial_g, [0.25, 0.75])
    assert exp.p2.scheme == "RL2"
    assert cfg.game().constant_c == 6.0
