# %% [markdown]
# # The Q-network
#
# Stacked frames go through two convolutions, the instruction through a GRU.
# The two are fused either by concatenation or by gated attention (one
# sigmoid gate per image channel), then a ReLU trunk feeds dueling value and
# advantage heads. Everything is numpy with hand-written gradients.

# %%
import tempfile
from pathlib import Path

import numpy as np

from ordergrid.env import GridWorld, default_layout
from ordergrid.gradcheck import run_all
from ordergrid.language import parse, resolve_plan
from ordergrid.qnet import (NetworkConfig, QNetwork, dueling_combine, load_checkpoint,
                            save_checkpoint)

for fusion in ("cat", "ga"):
    cfg = NetworkConfig(fusion=fusion)
    n = sum(int(np.prod(s)) for s in cfg.param_shapes().values())
    print(f"{fusion}: features {cfg.feature_shape()}, trunk input {cfg.fused_dim()}, {n} parameters")

# %%
instr = parse("Go to the blue, but first go to the green")
env = GridWorld(default_layout())
_, frames = env.reset(resolve_plan(instr))
net = QNetwork(NetworkConfig(fusion="ga"))
params = net.init(0)
print("Q(s, .) =", np.round(net.q_values(params, frames, instr.token_ids()), 4))

# %% [markdown]
# The dueling combination subtracts the mean advantage, so shifting every
# advantage by a constant changes nothing.

# %%
print(dueling_combine(1.0, [1.0, 2.0, 3.0]), dueling_combine(1.0, [11.0, 12.0, 13.0]))

# %% [markdown]
# ## Gradient check
#
# Central differences against the analytic backward pass, for every
# parameter tensor, both fusions and the full double-Q TD loss.

# %%
rows = run_all(tol=1e-3, full_size_coords=None)
print(f"{sum(r[3] for r in rows)}/{len(rows)} within 1e-3, worst {max(r[2] for r in rows):.1e}")

# %% [markdown]
# Checkpoints are a raw float64 blob plus a manifest with a checksum.

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "net.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path, net.config)
    print(all(np.array_equal(loaded[k], params[k]) for k in params))
