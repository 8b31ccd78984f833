# %% [markdown]
# # Prioritized replay
#
# Priorities live in a sum tree, so drawing an item in proportion to its
# priority is a walk from the root. Sampling is stratified: the total mass
# is cut into one segment per batch slot.

# %%
import numpy as np

from ordergrid.replay import PERConfig, PrioritizedReplayBuffer, SumTree

tree = SumTree(4)
for i, p in enumerate([1.0, 1.0, 2.0]):
    tree.update(i, p)
print("total", tree.total, "| mass 3.5 ->", tree.find_prefix(3.5))

# %% [markdown]
# Fill a buffer, give the items uneven TD errors and compare empirical
# frequencies with the target probabilities.

# %%
rng = np.random.default_rng(0)
buf = PrioritizedReplayBuffer(16, PERConfig(alpha=0.6, capacity=16))
frames = np.zeros((16, 10, 10), dtype=np.uint8)
for k in range(8):
    buf.push(frames, [0, 1, 2, 3], k % 4, 0.0, frames, False)
buf.update_priorities(np.arange(8), [0.0, 0.1, 0.5, 1.0, 1.0, 2.0, 4.0, 8.0])
counts = np.zeros(8)
for _ in range(2000):
    counts += np.bincount(buf.sample_indices(32, rng), minlength=8)
print("target   ", np.round(buf.probabilities(), 3))
print("empirical", np.round(counts / counts.sum(), 3))

# %% [markdown]
# Importance weights undo the sampling bias; beta anneals towards 1 over
# training and the largest weight in each batch is scaled to 1.

# %%
idx, batch, w = buf.sample(8, rng, beta=0.4)
print(idx, np.round(w, 3))
cfg = PERConfig()
print([round(cfg.beta(f), 2) for f in (0.0, 0.5, 1.0)])
