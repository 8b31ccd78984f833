# %% [markdown]
# # Evaluation protocol and reports
#
# Each cell samples a proportion of the short instructions, trains a fresh
# agent and scores it greedily. The largest proportion is also scored on
# the long held-out instructions. Subsets with a non-linear connector also
# report their comma-only instructions separately.
#
# A scripted shortest-path agent should solve everything; it checks the
# language, the environment and the evaluator together.

# %%
import tempfile
from pathlib import Path

from ordergrid.agent import AgentConfig
from ordergrid.env import default_layout
from ordergrid.experiment import (ExperimentSpec, OraclePolicy, cell_record, evaluate_success_rate,
                                  format_table, load_results, persist_results, run_experiment)
from ordergrid.language import LanguageSubset, enumerate_instructions

for subset in LanguageSubset:
    instrs = enumerate_instructions(subset)
    print(subset.title, len(instrs), evaluate_success_rate(OraclePolicy(), instrs, default_layout()))

# %% [markdown]
# Oracle records laid out like the result tables.

# %%
records = []
for subset in LanguageSubset:
    spec = ExperimentSpec(subset)
    records.append(cell_record(spec, OraclePolicy(), 0.9, 0, enumerate_instructions(subset, 1, 3),
                               enumerate_instructions(subset, 4, 6)))
print(format_table(records, "train"))
print()
print(format_table(records, "test"))

# %% [markdown]
# A real sweep with a tiny budget, just to show the mechanics. Meaningful
# numbers need hundreds of epochs per cell.

# %%
spec = ExperimentSpec(LanguageSubset.COMMA_BUT_BEFORE, replay="prioritized",
                      proportions=(0.1, 0.3), epochs=2)
tiny = AgentConfig(batch_size=8, replay_capacity=1024, max_steps_per_subgoal=5)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "cells.jsonl"
    run_experiment(spec, tiny, path)
    loaded = load_results(path)
for rec in loaded:
    print(rec["proportion"], rec["n_train"], rec["train_success"], rec["test_success"])
print(format_table(loaded, "test"))
