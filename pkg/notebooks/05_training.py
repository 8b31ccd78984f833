# %% [markdown]
# # Training an agent
#
# One epoch plays one episode per training instruction and then syncs the
# target network. Here a short run on the three single-goal instructions,
# with the terminal rewards scaled up as in configs/smoke.txt.

# %%
from ordergrid.agent import AgentConfig, greedy_statuses, train
from ordergrid.env import RewardConfig, default_layout
from ordergrid.language import LanguageSubset, enumerate_instructions
from ordergrid.qnet import OptimizerConfig

instrs = enumerate_instructions(LanguageSubset.COMMA, 1, 1)
cfg = AgentConfig(gamma=0.9,
                  rewards=RewardConfig(gamma=0.9, r_correct=10.0, r_wrong=-10.0, r_step=-0.1),
                  replay="prioritized", replay_capacity=2 ** 14, eps_decay_steps=2000,
                  optimizer=OptimizerConfig(lr=1e-3), seed=0)


def progress(state, rec):
    if rec["epoch"] % 10 == 0:
        print(f"epoch {rec['epoch']:3d}  greedy success {rec['train_success_rate']:.2f}  "
              f"eps {rec['epsilon']:.2f}  steps {rec['env_steps']}")


state, curve = train(instrs, cfg, 120, stop_at=1.0, callback=progress)
print("epochs used:", len(curve))

# %% [markdown]
# Greedy rollouts after training.

# %%
for instr, status in zip(instrs, greedy_statuses(state.net, state.online, instrs,
                                                 default_layout())):
    print(f"{instr.text:20s} {status.value}")
