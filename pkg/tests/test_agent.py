import numpy as np
import pytest

from ordergrid.agent import (AgentConfig, TrainingError, greedy_statuses, init_state, run_episode,
                             select_action, train, train_epoch)
from ordergrid.env import RewardConfig, Status, bfs_distance, default_layout
from ordergrid.language import LanguageSubset, enumerate_instructions, parse

ONE = enumerate_instructions(LanguageSubset.COMMA, 1, 1)
TWO = enumerate_instructions(LanguageSubset.COMMA, 2, 2)[:2]


def quick_config(**kw):
    base = dict(batch_size=4, replay_capacity=512, eps_decay_steps=200, max_steps_per_subgoal=8)
    base.update(kw)
    return AgentConfig(**base)


def test_select_action_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_action(np.array([0.1, 0.7, 0.2, 0.7]), 0.0, rng) == 1
    assert select_action(np.zeros(4), 0.0, rng) == 0
    with pytest.raises(ValueError):
        select_action(np.zeros(4), 1.5, rng)


def test_select_action_uniform_when_fully_random():
    rng = np.random.default_rng(1)
    picks = [select_action(np.array([0.0, 0.0, 9.0, 0.0]), 1.0, rng) for _ in range(20_000)]
    freq = np.bincount(picks, minlength=4) / len(picks)
    assert np.max(np.abs(freq - 0.25)) < 0.015


def test_epsilon_schedule_and_gamma_sync():
    cfg = AgentConfig(eps_decay_steps=100, gamma=0.9)
    assert cfg.epsilon(0) == 1.0 and cfg.epsilon(50) == pytest.approx(0.525)
    assert cfg.epsilon(10_000) == 0.05
    assert cfg.rewards.gamma == 0.9
    with pytest.raises(ValueError):
        AgentConfig(replay="ranked")


def test_run_episode_pushes_one_transition_per_step():
    cfg = quick_config(replay="prioritized", batch_size=10_000)
    state = init_state(cfg)
    ep = run_episode(ONE[0], state, cfg)
    assert len(state.replay) == ep["steps"] == state.env_steps
    assert ep["loss"] is None and state.updates == 0
    # nothing has been trained on yet, so every item carries the initial max priority
    assert np.all(state.replay.priorities[:len(state.replay)] == 1.0)


def test_updates_follow_collected_steps():
    cfg = quick_config()
    state = init_state(cfg)
    run_episode(ONE[0], state, cfg)
    before = state.updates
    ep = run_episode(ONE[1], state, cfg)
    assert state.updates - before == ep["steps"]
    cfg2 = quick_config(updates_per_episode=3)
    state2 = init_state(cfg2)
    run_episode(ONE[0], state2, cfg2)
    run_episode(ONE[0], state2, cfg2)
    assert state2.updates == 6


def test_target_synced_once_per_epoch():
    cfg = quick_config()
    state = init_state(cfg)
    start = {k: v.copy() for k, v in state.target.items()}
    for instr in ONE:
        run_episode(instr, state, cfg)
        assert all(np.array_equal(state.target[k], start[k]) for k in start)
    assert any(not np.array_equal(state.online[k], start[k]) for k in start)
    train_epoch(ONE, state, cfg)
    assert all(np.array_equal(state.target[k], state.online[k]) for k in start)
    train_epoch(ONE, state, cfg)
    assert state.sync_log == [1, 2]


def test_timeout_transition_bootstraps_with_real_potential():
    cfg = quick_config(max_steps_per_subgoal=1, eps_start=0.0, eps_end=0.0, batch_size=10_000,
                       rewards=RewardConfig(r_step=-0.1))
    state = init_state(cfg)
    instr = parse("Go to the blue")
    ep = run_episode(instr, state, cfg)
    assert ep["status"] == "timeout"
    batch = state.replay.gather(np.array([0]))
    assert batch["done"][0] == 0.0
    layout = default_layout()
    phi0 = -bfs_distance(layout, layout.agent_start, layout.objects[instr.subgoals[0]])
    after = state.env.state.agent
    phi1 = -bfs_distance(layout, after, layout.objects[instr.subgoals[0]])
    assert batch["reward"][0] == pytest.approx(-0.1 + cfg.gamma * phi1 - phi0, abs=1e-12)


def test_train_errors():
    with pytest.raises(TrainingError):
        train(ONE, quick_config(), 0)
    with pytest.raises(TrainingError):
        train([], quick_config(), 1)


def test_train_is_reproducible():
    cfg = quick_config(seed=4)
    _, c1 = train(TWO, cfg, 3)
    state, c2 = train(TWO, cfg, 3)
    strip = lambda c: [{k: v for k, v in r.items() if k != "wall_time"} for r in c]
    assert strip(c1) == strip(c2)
    assert len(c1) == 3 and state.sync_log == [1, 2, 3]
    assert all(0.0 <= r["train_success_rate"] <= 1.0 for r in c1)


def test_stop_at_ends_early():
    _, curve = train(ONE, quick_config(), 5, stop_at=0.0)
    assert len(curve) == 1


def test_greedy_statuses_are_final():
    cfg = quick_config()
    state = init_state(cfg)
    statuses = greedy_statuses(state.net, state.online, ONE + TWO, default_layout(), 5)
    assert len(statuses) == 5
    assert all(s is not Status.RUNNING for s in statuses)
