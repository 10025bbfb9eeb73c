# One call to hierarchical decoding, then a look inside every round:
# which candidates survived each stage and why the winner won.

# %%
import numpy as np

from spoofguide import BenchmarkConfig, HierParams, hier_generate, train_bank
from spoofguide.harness import make_corpora

# %%
cfg = BenchmarkConfig(decoders=())
model, real_train, _, fake_train, _ = make_corpora(cfg)
bank = train_bank(real_train, fake_train, cfg.train, cfg.feature_dim)

# %% [markdown]
# A 20-token warmup, then rounds that spawn 8 ten-token chunks, extend the
# best 5 to 25 tokens, extend the best 3 to 50 tokens and pick one by
# averaging its rank under the three full-window detectors.

# %%
hp = HierParams(max_len=170)
tokens, logs = hier_generate(model, bank, [], hp, np.random.default_rng(0))
print(f"generated {len(tokens)} tokens in {len(logs)} rounds")
for log in logs:
    print(f"round {log.round_index}: beams {log.beam_counts}, stage lengths {log.stage_lens}")
    print("  stage-1 scores", np.round(log.stage1_scores, 3))
    print("  finalists", log.final_streams, "R =", np.round(log.R, 2), "-> stream", log.chosen_stream)

# %% [markdown]
# Ranks rather than raw scores are combined, so any monotone rescaling
# of one detector leaves the choice unchanged. The winner is not always
# the best stage-1 candidate: a chunk that starts well can fall behind
# once the longer detectors see more of it.

# %%
first = logs[0]
order = np.argsort(first.stage1_scores)[::-1]
print("stage-1 rank of the round-0 winner:", int(np.where(order == first.chosen_stream)[0][0]) + 1)
