# %% [markdown]
# # The grid world
#
# A 10x10 grid with the agent and three coloured objects. Entering the
# current sub-goal advances the plan; entering any other object ends the
# episode in failure. Rewards are shaped with the negative shortest-path
# distance to the current sub-goal as potential.

# %%
import numpy as np

from ordergrid.env import (GridLayout, GridWorld, RewardConfig, bfs_path, default_layout,
                           greedy_action_sets, potential, render_ascii, value_iteration)
from ordergrid.language import Referent, parse, resolve_plan

layout = default_layout()
print(render_ascii(layout))

# %% [markdown]
# Walk a scripted shortest path through a two-step plan, routing around the
# object that must not be touched.

# %%
plan = resolve_plan(parse("Go to the red, but first go to the green"))
env = GridWorld(layout, RewardConfig(gamma=0.99), record_trace=True)
state, frames = env.reset(plan, max_steps=60)
print("stacked observation:", frames.shape)
while not state.done:
    goal = layout.objects[state.goal]
    others = [c for r, c in layout.objects.items() if r != state.goal]
    state, frames, reward, _ = env.step(bfs_path(layout, state.agent, goal, blocked=others)[0])
print(state.status.value, "in", state.steps, "steps")
print("base return  ", sum(t["r_base"] for t in env.trace))
print("shaped return", round(sum(t["r_shaped"] for t in env.trace), 3))

# %% [markdown]
# ## Shaping keeps the optimal policy
#
# Exact value iteration on a 5x5 board, with and without shaping, gives the
# same set of optimal actions in every state.

# %%
small = GridLayout(5, 5, (0, 0), {Referent.RED: (4, 4), Referent.BLUE: (2, 2),
                                   Referent.GREEN: (0, 4)})
for goal in Referent:
    shaped = value_iteration(small, [goal], RewardConfig(gamma=0.9, shaping=True))
    plain = value_iteration(small, [goal], RewardConfig(gamma=0.9, shaping=False))
    same = np.array_equal(greedy_action_sets(shaped), greedy_action_sets(plain))
    print(goal.word, "identical argmax sets:", same)

# %% [markdown]
# With unit discount the shaping terms telescope to minus the start potential.

# %%
rng = np.random.default_rng(0)
env = GridWorld(layout, RewardConfig(gamma=1.0), record_trace=True)
s0, _ = env.reset([Referent.BLUE, Referent.RED], max_steps=60)
while not env.state.done:
    env.step(int(rng.integers(4)))
gap = sum(t["r_shaped"] - t["r_base"] for t in env.trace)
print(gap, -potential(layout, s0))
