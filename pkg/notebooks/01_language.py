# %% [markdown]
# # The instruction language
#
# Instructions are chains of "go to the <colour>" clauses joined by order
# connectors. A plain comma keeps the written order. "but first" pulls the
# last clause to the front, "but before" swaps the last two. A non-linear
# connector may appear once, as the final connector.

# %%
from ordergrid.language import (LanguageSubset, SplitSpec, enumerate_instructions, parse,
                                 resolve_plan, split_train_test, tokenize)

for text in ["Go to the red, go to the blue, go to the green",
             "Go to the red, go to the blue, but first go to the green",
             "Go to the red, go to the blue, but before go to the green"]:
    plan = resolve_plan(parse(text))
    print(f"{text:60s} -> {[r.word for r in plan]}")

# %% [markdown]
# Tokens come from a closed ten-word vocabulary; anything else is rejected.

# %%
print(tokenize("Go to the red, but first go to the green"))
try:
    tokenize("Go to the purple")
except Exception as exc:
    print(type(exc).__name__, exc)

# %% [markdown]
# ## Subset sizes
#
# Training pools use 1 to 3 sub-goals, held-out pools 4 to 6.

# %%
for subset in LanguageSubset:
    short = enumerate_instructions(subset, 1, 3)
    long = enumerate_instructions(subset, 4, 6)
    print(f"{subset.title:16s} train pool {len(short):3d}   test pool {len(long):3d}")

# %% [markdown]
# A split draws a fraction of the short pool for training (rounded half up)
# and always tests on the whole long pool.

# %%
train, test = split_train_test(LanguageSubset.COMMA_BUT_FIRST, SplitSpec(0.3, seed=0))
print(len(train), len(test))
for instr in train[:5]:
    print(" ", instr.text)
