import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordergrid.env import (
    FRAME_STACK, Action, EnvError, GridLayout, GridWorld, InvalidLayout, RewardConfig,
    SteppedAfterDone, Status, bfs_distance, bfs_path, default_layout, encode_observation,
    greedy_action_sets, initial_state, load_layout, potential, push_frame, random_layout,
    render_ascii, save_layout, shaped_reward, transition, truncated_potential, value_iteration,
    write_trace)
from ordergrid.language import Referent

R, B, G = Referent.RED, Referent.BLUE, Referent.GREEN


def small_layout():
    return GridLayout(5, 5, (0, 0), {R: (4, 4), B: (2, 2), G: (0, 4)})


def manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def test_default_layout_matches_figure():
    layout = default_layout()
    env = GridWorld(layout)
    state, frames = env.reset([R])
    assert state.agent == (1, 5)
    obs = frames[-4:]
    assert obs[1, 5, 6] == 1 and obs[1].sum() == 1
    assert obs[0, 5, 1] == 1


def test_reset_fills_stack_and_is_deterministic():
    env = GridWorld(default_layout())
    s1, f1 = env.reset([R, B])
    s2, f2 = env.reset([R, B])
    assert s1 == s2 and np.array_equal(f1, f2)
    assert f1.shape == (4 * FRAME_STACK, 10, 10)
    for k in range(1, FRAME_STACK):
        assert np.array_equal(f1[:4], f1[4 * k:4 * k + 4])
    assert (s1.progress, s1.steps, s1.status) == (0, 0, Status.RUNNING)


def test_layout_validation():
    with pytest.raises(InvalidLayout):
        GridLayout(10, 10, (1, 5), {R: (1, 5), B: (4, 9), G: (3, 0)})
    with pytest.raises(InvalidLayout):
        GridLayout(10, 10, (1, 5), {R: (10, 5), B: (4, 9), G: (3, 0)})
    with pytest.raises(InvalidLayout):
        GridLayout(10, 10, (1, 5), {R: (2, 5), B: (4, 9)})


def test_reset_preconditions():
    # the agent can never start on an object: the layout itself rejects that
    with pytest.raises(InvalidLayout):
        GridLayout(5, 5, (1, 0), {R: (1, 0), B: (2, 2), G: (0, 4)})
    layout = GridLayout(5, 5, (0, 0), {R: (1, 0), B: (2, 2), G: (0, 4)})
    with pytest.raises(EnvError):
        initial_state(layout, [])
    assert initial_state(layout, [B]).agent == (0, 0)


def test_success_on_last_subgoal():
    layout = default_layout()
    state = initial_state(layout, [R])
    state = state.__class__((5, 5), state.plan, 0, 0, Status.RUNNING, 30)
    nxt, r = transition(layout, state, Action.RIGHT, RewardConfig(shaping=False))
    assert nxt.status is Status.SUCCESS and nxt.done and r == 1.0
    assert nxt.progress == 1


def test_wrong_object_fails():
    layout = default_layout()
    state = initial_state(layout, [B])
    state = state.__class__((5, 5), state.plan, 0, 0, Status.RUNNING, 30)
    nxt, r = transition(layout, state, Action.RIGHT, RewardConfig(shaping=False))
    assert nxt.status is Status.FAILURE and r == -1.0


def test_off_grid_move_is_noop():
    layout = GridLayout(5, 5, (0, 2), {R: (4, 4), B: (2, 2), G: (3, 0)})
    state = initial_state(layout, [R])
    nxt, _ = transition(layout, state, Action.LEFT, RewardConfig())
    assert nxt.agent == (0, 2) and nxt.steps == 1


def test_up_increases_y():
    state = initial_state(default_layout(), [R])
    nxt, _ = transition(default_layout(), state, Action.UP, RewardConfig())
    assert nxt.agent == (1, 6)


def test_timeout_and_step_after_done():
    env = GridWorld(default_layout())
    env.reset([R], max_steps=3)
    for _ in range(3):
        state, _, _, done = env.step(Action.LEFT)
    assert done and state.status is Status.TIMEOUT and state.steps == 3
    with pytest.raises(SteppedAfterDone):
        env.step(Action.LEFT)


def test_progress_through_plan():
    layout = default_layout()
    env = GridWorld(layout, RewardConfig(shaping=False))
    state, _ = env.reset([R, B])
    for a in bfs_path(layout, state.agent, layout.objects[R]):
        state, _, r, _ = env.step(a)
    assert state.progress == 1 and not state.done and r == 1.0
    for a in bfs_path(layout, state.agent, layout.objects[B], blocked=[layout.objects[G]]):
        state, _, _, _ = env.step(a)
    assert state.status is Status.SUCCESS


def test_bfs_distance_examples():
    layout = default_layout()
    assert bfs_distance(layout, (1, 5), (6, 5)) == 5
    assert bfs_distance(layout, (3, 3), (3, 3)) == 0
    assert bfs_distance(layout, (3, 0), (4, 9)) == 10


@settings(max_examples=200)
@given(st.tuples(st.integers(0, 9), st.integers(0, 9)), st.tuples(st.integers(0, 9), st.integers(0, 9)))
def test_bfs_equals_manhattan_on_open_grid(a, b):
    assert bfs_distance(default_layout(), a, b) == manhattan(a, b)
    path = bfs_path(default_layout(), a, b)
    assert len(path) == manhattan(a, b)


def test_bfs_with_blocked_cells():
    layout = small_layout()
    wall = [(1, y) for y in range(5)]
    assert bfs_distance(layout, (0, 0), (4, 4), blocked=wall) == -1
    with pytest.raises(EnvError):
        bfs_path(layout, (0, 0), (4, 4), blocked=wall)
    gap = wall[:-1]
    assert bfs_distance(layout, (0, 0), (4, 0), blocked=gap) == 4 + 4 + 4


def test_potential_examples():
    layout = default_layout()
    s = initial_state(layout, [R, B])
    assert potential(layout, s) == -5.0
    adj = s.__class__((6, 4), s.plan, 0, 0, Status.RUNNING, 60)
    assert potential(layout, adj) == -1.0
    done = s.__class__((6, 5), s.plan, 2, 7, Status.SUCCESS, 60)
    assert potential(layout, done) == 0.0


def test_truncated_potential_ignores_timeout():
    layout = default_layout()
    s = initial_state(layout, [R])
    timed_out = s.__class__((1, 5), s.plan, 0, 30, Status.TIMEOUT, 30)
    assert potential(layout, timed_out) == 0.0
    assert truncated_potential(layout, timed_out) == -5.0
    failed = s.__class__((4, 9), s.plan, 0, 9, Status.FAILURE, 30)
    assert truncated_potential(layout, failed) == 0.0


def test_shaped_reward_examples():
    assert shaped_reward(0.0, -3.0, -2.0, 0.99) == pytest.approx(1.02, abs=1e-12)
    assert shaped_reward(0.0, -4.0, -4.0, 1.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_telescoping_with_unit_discount(seed):
    rng = np.random.default_rng(seed)
    layout = default_layout()
    rewards = RewardConfig(gamma=1.0)
    plan = [R, B, G]
    env = GridWorld(layout, rewards, record_trace=True)
    s0, _ = env.reset(plan, max_steps=40)
    phi0 = potential(layout, s0)
    while not env.state.done:
        env.step(int(rng.integers(4)))
    shaped = sum(t["r_shaped"] for t in env.trace)
    base = sum(t["r_base"] for t in env.trace)
    assert shaped - base == pytest.approx(-phi0, abs=1e-9)


def test_observation_planes():
    layout = default_layout()
    obs = encode_observation(layout, initial_state(layout, [R]))
    assert obs.shape == (4, 10, 10) and obs.dtype == np.uint8
    assert list(obs.sum(axis=(1, 2))) == [1, 1, 1, 1]
    assert obs[3, 0, 3] == 1 and obs[2, 9, 4] == 1


def test_push_frame_keeps_last_four():
    obs = [np.full((4, 2, 2), k, dtype=np.uint8) for k in range(1, 6)]
    stack = np.concatenate([obs[0]] * 4)
    for o in obs[1:]:
        stack = push_frame(stack, o)
    assert [int(stack[4 * k, 0, 0]) for k in range(4)] == [2, 3, 4, 5]


def test_render_ascii():
    text = render_ascii(default_layout())
    rows = text.split("\n")
    assert len(rows) == 10 and all(len(r) == 10 for r in rows)
    assert rows[9 - 5][1] == "A" and rows[9 - 5][6] == "R"
    assert rows[0][4] == "B" and rows[9][3] == "G"
    assert rows[0][0] == "·"
    assert render_ascii(default_layout()) == text


def test_layout_round_trip(tmp_path):
    layout = random_layout(7)
    save_layout(layout, tmp_path / "l.json")
    assert load_layout(tmp_path / "l.json") == layout
    assert random_layout(7) == layout


def test_trace_records(tmp_path):
    env = GridWorld(default_layout(), record_trace=True)
    env.reset([R])
    env.step(Action.RIGHT)
    rec = env.trace[0]
    assert set(rec) == {"step", "action", "agent", "progress", "r_base", "r_shaped", "status"}
    write_trace(env.trace, tmp_path / "t.jsonl")
    assert (tmp_path / "t.jsonl").read_text().count("\n") == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=80),
       st.sampled_from([(R,), (B, R), (G, B, R), (R, G)]))
def test_episode_invariants(actions, plan):
    layout = default_layout()
    env = GridWorld(layout)
    state, _ = env.reset(plan, max_steps=30 * len(plan))
    progress = 0
    for a in actions:
        if state.done:
            break
        prev = state
        state, _, _, _ = env.step(a)
        assert state.progress >= progress
        progress = state.progress
        if state.status is Status.FAILURE:
            assert state.agent != layout.objects[prev.goal]
        assert (state.status is Status.SUCCESS) == (state.progress == len(plan))
        assert state.steps <= state.max_steps
    assert state.status in (Status.RUNNING, Status.SUCCESS, Status.FAILURE, Status.TIMEOUT)


def test_value_iteration_invariance_small():
    layout = small_layout()
    for plan in ([R], [B, R]):
        shaped = value_iteration(layout, plan, RewardConfig(gamma=0.9, shaping=True))
        plain = value_iteration(layout, plan, RewardConfig(gamma=0.9, shaping=False))
        assert np.array_equal(greedy_action_sets(shaped), greedy_action_sets(plain))


def test_value_iteration_values():
    layout = small_layout()
    q = value_iteration(layout, [R], RewardConfig(gamma=0.9, shaping=False))
    # from (4, 3) stepping up reaches red at once
    assert q[0, 4, 3, Action.UP] == pytest.approx(1.0)
    # optimal value decays by gamma per extra step on an open path
    assert q[0, 3, 3].max() == pytest.approx(0.9)
