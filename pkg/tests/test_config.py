import pytest

from ordergrid.config import (DEFAULTS, ConfigError, build_agent_config, build_layout,
                              dump_config, load_config, parse_config_text, with_method)
from ordergrid.env import default_layout, random_layout
from ordergrid.qnet import Fusion


def test_parse_values_and_comments():
    text = 'reward.gamma = 0.9  # discount\n\nnetwork.fusion = ga\nexperiment.seeds = [1, 2]\n'
    assert parse_config_text(text) == {"reward.gamma": 0.9, "network.fusion": "ga",
                                       "experiment.seeds": [1, 2]}
    with pytest.raises(ConfigError):
        parse_config_text("just words")


def test_precedence(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("optimizer.lr = 0.01\nseed = 3\n")
    cfg = load_config(path, ["seed=5"])
    assert cfg["optimizer.lr"] == 0.01 and cfg["seed"] == 5
    assert cfg["reward.gamma"] == DEFAULTS["reward.gamma"]
    with pytest.raises(ConfigError):
        load_config(None, ["no.such.key=1"])


def test_dump_round_trip(tmp_path):
    cfg = load_config(None, ["agent.updates_per_episode=4", "train.stop_at=0.9"])
    path = tmp_path / "c.txt"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_build_agent_config_maps_every_section():
    cfg = load_config(None, ["reward.gamma=0.9", "network.fusion=ga", "replay.mode=prioritized",
                             "replay.capacity=1024", "per.alpha=0.5", "optimizer.lr=0.002",
                             "env.max_steps_per_subgoal=12", "seed=7"])
    agent = build_agent_config(cfg)
    assert agent.gamma == agent.rewards.gamma == 0.9
    assert agent.network.fusion is Fusion.GATED_ATTENTION
    assert agent.replay == "prioritized" and agent.per.capacity == 1024 and agent.per.alpha == 0.5
    assert agent.optimizer.lr == 0.002 and agent.max_steps_per_subgoal == 12 and agent.seed == 7
    with pytest.raises(ConfigError):
        build_agent_config(load_config(None, ["replay.mode=ranked"]))


def test_layout_selection(tmp_path):
    assert build_layout(DEFAULTS) == default_layout()
    assert build_layout(dict(DEFAULTS, **{"layout.random_seed": 4})) == random_layout(4)


def test_with_method():
    agent = build_agent_config(dict(DEFAULTS))
    changed = with_method(agent, fusion="ga", replay="prioritized", seed=9)
    assert changed.network.fusion is Fusion.GATED_ATTENTION
    assert (changed.replay, changed.seed) == ("prioritized", 9)
    assert with_method(agent) == agent
