# Entropy-aware sampling keeps a small memory of recently favoured tokens.
# This script walks a few steps by hand and prints what the memory holds
# and how hard each remembered token gets pushed down.

# %%
import numpy as np

from spoofguide import EASParams, EASState, eas_penalties, eas_step
from spoofguide.armodel import banded_hmm, hmm_sample, ngram_train
from spoofguide.sampling import MemoryEntry

# %% [markdown]
# A toy world: 32 tokens emitted by an 8-state chain, and a bigram model
# fitted to 60 samples of it.

# %%
source = banded_hmm(32, 8, seed=3)
rng = np.random.default_rng(11)
corpus = [hmm_sample(source, 120, rng) for _ in range(60)]
model = ngram_train(corpus, 2, 1.0)

# %% [markdown]
# Each step records the top three candidates of the adjusted distribution
# plus the token actually drawn. Entries age by one per step and drop out
# after the memory window (15 steps by default).

# %%
params = EASParams()
state, ctx = EASState(), [0]
step_rng = np.random.default_rng(0)
for t in range(6):
    tok, state = eas_step(model, ctx[-1:], state, params, step_rng)
    ctx.append(tok)
    pen = eas_penalties(state, params, model.vocab_size)
    strongest = sorted(pen.items(), key=lambda kv: -kv[1])[:4]
    print(f"step {t}: drew {tok:2d}  memory size {len(state):2d}  "
          + "  ".join(f"{j}:{p:.3f}" for j, p in strongest))

# %% [markdown]
# The penalty for one entry is alpha / (1 + rank) * beta ** age, summed
# per token and capped at gamma. A single rank-1 entry aged two steps:

# %%
single = EASState((MemoryEntry(token=5, rank=1, age=2),))
print("rank 1, age 2 ->", round(eas_penalties(single, params, 8)[5], 6))
crowded = EASState(tuple(MemoryEntry(5, 1, 0) for _ in range(30)))
print("thirty fresh rank-1 entries ->", eas_penalties(crowded, params, 8)[5], "(the cap)")
