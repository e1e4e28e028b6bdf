import json

import pytest

from ridgeid.harness.config import ConfigError, ExperimentConfig, load_config, parse_config_text


def test_defaults_follow_reference_setup():
    cfg = ExperimentConfig()
    assert (cfg.m, cfg.d, cfg.trials, cfg.n_rep, cfg.steps) == (20, 20, 60, 180, 100)
    assert (cfg.gamma, cfg.h, cfg.dedup_delta) == (2.0, 1e-3, 0.05)
    assert cfg.n_grid == 256 and cfg.gd_steps == 1000 and cfg.gd_stepsize == 0.1


def test_key_value_text():
    cfg = parse_config_text(
        """
        # sweep
        kind = phase-transition
        m = 10
        d = 12
        eps = 0.5, 1, 1.5
        m-x = 5,10   # dashes and case of the alias are accepted
        whitening = yes
        """
    )
    assert cfg.kind == "phase-transition" and cfg.m == 10 and cfg.d == 12
    assert cfg.eps == [0.5, 1.0, 1.5] and cfg.m_X == [5, 10] and cfg.whitening is True


def test_json_text(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"m": 4, "d": 4, "eps": [0.2], "m_X": [4, 8], "trials": 3}))
    cfg = load_config(p)
    assert cfg.m_X == [4, 8] and cfg.trials == 3


def test_round_trip_through_dict():
    cfg = parse_config_text("m = 5\nd = 9\neps = 0.3")
    assert ExperimentConfig(**cfg.to_dict()) == cfg
    assert cfg.updated(seed=None) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "colour = blue",
        "m = five",
        "whitening = maybe",
        "trials = 0",
        "m = 30",
        "eps =",
        "gamma = 1.2",
        "clustering = dbscan",
        "just a line",
        "{not json",
        "[1, 2]",
        "seed = -1",
        "m = 2.5",
    ],
)
def test_rejects(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
