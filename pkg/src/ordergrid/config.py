"""Flat dotted-key run configuration.

A config file holds one ``key = value`` per line; values are JSON
(``0.99``, ``true``, ``"ga"``, ``[0.1, 0.5]``) or bare strings. ``#``
starts a comment. Precedence is defaults < file < command-line overrides.
"""

from __future__ import annotations

import json
from dataclasses import replace

from .agent import AgentConfig
from .env import GridLayout, RewardConfig, default_layout, load_layout, random_layout
from .qnet import NetworkConfig, OptimizerConfig
from .replay import PERConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "layout.path": "",
    "layout.random_seed": -1,
    "language.subset": "comma-butfirst",
    "language.proportion": 0.9,
    "env.max_steps_per_subgoal": 30,
    "reward.gamma": 0.99,
    "reward.r_correct": 1.0,
    "reward.r_wrong": -1.0,
    "reward.r_step": 0.0,
    "reward.shaping": True,
    "network.fusion": "cat",
    "network.conv1_filters": 16,
    "network.conv2_filters": 32,
    "network.kernel": 3,
    "network.conv2_stride": 2,
    "network.conv1_padding": 0,
    "network.conv2_padding": 1,
    "network.embed_dim": 32,
    "network.instr_dim": 64,
    "network.hidden": 128,
    "optimizer.lr": 1e-4,
    "optimizer.beta1": 0.9,
    "optimizer.beta2": 0.999,
    "optimizer.eps": 1e-8,
    "agent.eps_start": 1.0,
    "agent.eps_end": 0.05,
    "agent.eps_decay_steps": 100_000,
    "agent.updates_per_episode": None,
    "agent.batch_size": 32,
    "agent.double_q": True,
    "replay.mode": "uniform",
    "replay.capacity": 2 ** 17,
    "per.alpha": 0.6,
    "per.beta_start": 0.4,
    "per.beta_end": 1.0,
    "per.epsilon_priority": 1e-3,
    "train.epochs": 100,
    "train.checkpoint_every": 0,
    "train.stop_at": None,
    "experiment.proportions": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "experiment.seeds": [0],
    "experiment.workers": 1,
}


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def load_config(path=None, overrides=()) -> dict:
    """Merge defaults, an optional file and ``key=value`` override strings."""
    cfg = dict(DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg.update(_checked(parse_config_text(fh.read())))
    cfg.update(_checked(parse_config_text("\n".join(overrides))))
    return cfg


def _checked(values: dict) -> dict:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return values


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {json.dumps(cfg[k])}\n" for k in sorted(cfg))


def build_layout(cfg: dict) -> GridLayout:
    if cfg["layout.path"]:
        return load_layout(cfg["layout.path"])
    if int(cfg["layout.random_seed"]) >= 0:
        return random_layout(int(cfg["layout.random_seed"]))
    return default_layout()


def build_agent_config(cfg: dict, layout: GridLayout | None = None) -> AgentConfig:
    layout = layout or build_layout(cfg)
    try:
        network = NetworkConfig(
            input_shape=(16, layout.height, layout.width),
            conv1_filters=int(cfg["network.conv1_filters"]),
            conv2_filters=int(cfg["network.conv2_filters"]),
            kernel=int(cfg["network.kernel"]),
            conv2_stride=int(cfg["network.conv2_stride"]),
            conv1_padding=int(cfg["network.conv1_padding"]),
            conv2_padding=int(cfg["network.conv2_padding"]),
            embed_dim=int(cfg["network.embed_dim"]),
            instr_dim=int(cfg["network.instr_dim"]),
            hidden=int(cfg["network.hidden"]),
            fusion=cfg["network.fusion"],
        )
        upe = cfg["agent.updates_per_episode"]
        return AgentConfig(
            gamma=float(cfg["reward.gamma"]),
            eps_start=float(cfg["agent.eps_start"]),
            eps_end=float(cfg["agent.eps_end"]),
            eps_decay_steps=int(cfg["agent.eps_decay_steps"]),
            updates_per_episode=None if upe is None else int(upe),
            batch_size=int(cfg["agent.batch_size"]),
            replay=str(cfg["replay.mode"]),
            replay_capacity=int(cfg["replay.capacity"]),
            per=PERConfig(alpha=float(cfg["per.alpha"]), beta_start=float(cfg["per.beta_start"]),
                          beta_end=float(cfg["per.beta_end"]),
                          epsilon_priority=float(cfg["per.epsilon_priority"]),
                          capacity=int(cfg["replay.capacity"])),
            double_q=bool(cfg["agent.double_q"]),
            max_steps_per_subgoal=int(cfg["env.max_steps_per_subgoal"]),
            seed=int(cfg["seed"]),
            network=network,
            optimizer=OptimizerConfig(lr=float(cfg["optimizer.lr"]),
                                      beta1=float(cfg["optimizer.beta1"]),
                                      beta2=float(cfg["optimizer.beta2"]),
                                      eps=float(cfg["optimizer.eps"])),
            rewards=RewardConfig(gamma=float(cfg["reward.gamma"]),
                                 r_correct=float(cfg["reward.r_correct"]),
                                 r_wrong=float(cfg["reward.r_wrong"]),
                                 r_step=float(cfg["reward.r_step"]),
                                 shaping=bool(cfg["reward.shaping"])),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def with_method(agent_cfg: AgentConfig, fusion=None, replay=None, seed=None) -> AgentConfig:
    network = agent_cfg.network if fusion is None else replace(agent_cfg.network, fusion=fusion)
    return replace(agent_cfg, network=network,
                   replay=agent_cfg.replay if replay is None else replay,
                   seed=agent_cfg.seed if seed is None else seed)
