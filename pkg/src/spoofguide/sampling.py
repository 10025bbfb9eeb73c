"""Distribution transforms, baseline samplers and entropy-aware sampling.

Every sampler here draws exactly one uniform from its ``numpy`` generator per
emitted token, so two samplers fed the same distributions and the same seed
make the same choices. That property is what lets the penalty-free
entropy-aware sampler be checked token-for-token against plain top-k/top-p
sampling.

Transform order inside entropy-aware sampling is temperature, then top-k,
then penalty subtraction, then nucleus sampling on the renormalized result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .armodel import NextTokenModel

__all__ = [
    "DegenerateDistributionError",
    "EASParams",
    "EASState",
    "MemoryEntry",
    "RASParams",
    "apply_temperature",
    "baseline_topk_generate",
    "eas_generate",
    "eas_penalties",
    "eas_step",
    "filter_top_k",
    "nucleus_filter",
    "nucleus_sample",
    "topk_nucleus_generate",
    "windowed_penalty",
    "windowed_penalty_generate",
]

# Slack for the cumulative-mass comparison in the nucleus cut; keeps
# e.g. 0.5 + 0.3 >= 0.8 true despite rounding.
_NUCLEUS_TOL = 1e-12


class DegenerateDistributionError(ValueError):
    """Raised when a distribution has no positive mass to sample from."""

    def __init__(self, msg: str = "degenerate distribution: no positive probability mass"):
        super().__init__(msg)


@dataclass(frozen=True)
class EASParams:
    """Entropy-aware sampling hyperparameters.

    Attributes:
        alpha: Penalty scale.
        beta: Per-step decay of a memory entry's penalty.
        gamma: Cap on the summed penalty of a single token.
        cluster_k: Number of top candidates remembered each step.
        window: Memory entries older than this many steps are evicted.
        top_p: Nucleus threshold.
        top_k: Top-k filter applied before penalties.
        temperature: Softmax temperature applied to the model distribution.
    """

    alpha: float = 0.2
    beta: float = 0.7
    gamma: float = 0.8
    cluster_k: int = 3
    window: int = 15
    top_p: float = 0.8
    top_k: int = 50
    temperature: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.cluster_k < 1 or self.window < 1 or self.top_k < 1:
            raise ValueError("cluster_k, window and top_k must be positive")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class RASParams:
    """Windowed repetition-penalty sampler settings (RAS-style stand-in)."""

    top_k: int = 50
    top_p: float = 0.8
    window: int = 25
    penalty: float = 0.1
    temperature: float = 1.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < self.penalty <= 1:
            raise ValueError("penalty must be in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


class MemoryEntry(NamedTuple):
    token: int
    rank: int
    age: int


@dataclass(frozen=True)
class EASState:
    """The candidate memory buffer. Immutable; steps return a new state."""

    entries: tuple[MemoryEntry, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)


def _descending_order(p: np.ndarray) -> np.ndarray:
    # stable sort on -p: equal probabilities keep ascending token id
    return np.argsort(-p, kind="stable")


def apply_temperature(probs: np.ndarray, T: float) -> np.ndarray:
    if not T > 0:
        raise ValueError("temperature must be > 0")
    probs = np.asarray(probs, dtype=np.float64)
    if T == 1.0:
        return probs
    with np.errstate(divide="ignore"):
        logp = np.log(probs) / T
    logp -= logp.max()
    q = np.exp(logp)
    return q / q.sum()


def filter_top_k(probs: np.ndarray, k: int) -> np.ndarray:
    """Keep the ``k`` most probable tokens (ties to lower id) and renormalize."""
    if k < 1:
        raise ValueError("k must be positive")
    probs = np.asarray(probs, dtype=np.float64)
    if k >= probs.shape[0]:
        return probs
    keep = _descending_order(probs)[:k]
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    total = out.sum()
    if total <= 0:
        raise DegenerateDistributionError()
    return out / total


def _nucleus(probs: np.ndarray, v: float) -> tuple[np.ndarray, np.ndarray]:
    """Token ids of the nucleus in descending order and their raw masses."""
    if not 0 < v <= 1:
        raise ValueError("nucleus threshold must be in (0, 1]")
    total = probs.sum()
    if not total > 0:
        raise DegenerateDistributionError()
    order = _descending_order(probs)
    cum = np.cumsum(probs[order])
    cut = int(np.searchsorted(cum, v * total - _NUCLEUS_TOL, side="left")) + 1
    cut = min(cut, int(np.count_nonzero(probs)), order.shape[0])
    ids = order[:cut]
    return ids, probs[ids]


def nucleus_filter(probs: np.ndarray, v: float) -> np.ndarray:
    """Zero everything outside the top-``v`` nucleus and renormalize.

    The nucleus is the shortest prefix of tokens sorted by descending
    probability (ties to lower id) whose cumulative mass reaches ``v`` of the
    total. Input need not be normalized.
    """
    probs = np.asarray(probs, dtype=np.float64)
    ids, mass = _nucleus(probs, v)
    out = np.zeros_like(probs)
    out[ids] = mass / mass.sum()
    return out


def nucleus_sample(probs: np.ndarray, v: float, rng: np.random.Generator) -> int:
    """Draw one token from the renormalized nucleus using a single uniform."""
    probs = np.asarray(probs, dtype=np.float64)
    ids, mass = _nucleus(probs, v)
    cum = np.cumsum(mass)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return int(ids[min(i, ids.shape[0] - 1)])


def _penalty_vector(state: EASState, params: EASParams, vocab_size: int) -> np.ndarray:
    if not state.entries:
        return np.zeros(vocab_size)
    tok, rank, age = (np.array(x) for x in zip(*state.entries))
    contrib = params.alpha / (1.0 + rank) * params.beta ** age.astype(np.float64)
    pen = np.bincount(tok, weights=contrib, minlength=vocab_size)
    return np.minimum(params.gamma, pen)


def eas_penalties(state: EASState, params: EASParams, vocab_size: int) -> dict[int, float]:
    """Capped, rank- and age-weighted penalty for every token held in memory.

    ``pi(j) = min(gamma, sum(alpha / (1 + r) * beta**a))`` over entries
    ``(j, r, a)``. Tokens absent from memory are omitted (penalty 0).
    """
    pen = _penalty_vector(state, params, vocab_size)
    present = sorted({e.token for e in state.entries})
    return {j: float(pen[j]) for j in present}


def _filtered(model: NextTokenModel, prefix: Sequence[int], temperature: float, top_k: int):
    return filter_top_k(apply_temperature(model.dist(prefix), temperature), top_k)


def _advance_memory(
    state: EASState, adjusted: np.ndarray, token: int, params: EASParams
) -> EASState:
    aged = [
        MemoryEntry(e.token, e.rank, e.age + 1)
        for e in state.entries
        if e.age + 1 <= params.window
    ]
    top = [int(t) for t in _descending_order(adjusted)[: params.cluster_k]]
    if token not in top:
        top.append(token)
    aged.extend(MemoryEntry(t, r, 0) for r, t in enumerate(top, start=1))
    return EASState(tuple(aged))


def eas_step(
    model: NextTokenModel,
    prefix: Sequence[int],
    state: EASState,
    params: EASParams,
    rng: np.random.Generator,
) -> tuple[int, EASState]:
    """One entropy-aware sampling step.

    Returns the sampled token and a new memory state; ``state`` is not
    modified. When the penalties remove all mass the unpenalized
    distribution is used instead.
    """
    s = _filtered(model, prefix, params.temperature, params.top_k)
    if state.entries and params.alpha > 0:
        adjusted = np.maximum(s - _penalty_vector(state, params, s.shape[0]), 0.0)
        total = adjusted.sum()
        adjusted = adjusted / total if total > 0 else s
    else:
        adjusted = s
    token = nucleus_sample(adjusted, params.top_p, rng)
    return token, _advance_memory(state, adjusted, token, params)


def eas_generate(
    model: NextTokenModel,
    prefix: Sequence[int],
    n_tokens: int,
    params: EASParams,
    rng: np.random.Generator,
    state: EASState | None = None,
) -> tuple[list[int], EASState]:
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    state = EASState() if state is None else state
    context = list(prefix)
    out = []
    for _ in range(n_tokens):
        tok, state = eas_step(model, context, state, params, rng)
        context.append(tok)
        out.append(tok)
    return out, state


def baseline_topk_generate(
    model: NextTokenModel,
    prefix: Sequence[int],
    n_tokens: int,
    k: int,
    temperature: float,
    rng: np.random.Generator,
) -> list[int]:
    """Ancestral sampling from the temperature-scaled, top-k filtered model."""
    return topk_nucleus_generate(model, prefix, n_tokens, k, 1.0, temperature, rng)


def topk_nucleus_generate(
    model: NextTokenModel,
    prefix: Sequence[int],
    n_tokens: int,
    k: int,
    top_p: float,
    temperature: float,
    rng: np.random.Generator,
) -> list[int]:
    context = list(prefix)
    out = []
    for _ in range(n_tokens):
        s = _filtered(model, context, temperature, k)
        tok = nucleus_sample(s, top_p, rng)
        context.append(tok)
        out.append(tok)
    return out


def windowed_penalty(
    probs: np.ndarray, history: Sequence[int], window: int, penalty: float
) -> np.ndarray:
    """Scale tokens seen in the last ``window`` history entries by ``penalty``.

    Returns the renormalized vector. A token counts once no matter how often
    it occurs in the window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    recent = np.unique(np.asarray(history[-window:], dtype=np.int64))
    if recent.size == 0 or penalty == 1.0:
        return probs
    out = probs.copy()
    out[recent] *= penalty
    return out / out.sum()


def windowed_penalty_generate(
    model: NextTokenModel,
    prefix: Sequence[int],
    n_tokens: int,
    k: int,
    top_p: float,
    window: int,
    penalty: float,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> list[int]:
    """RAS-style baseline: windowed multiplicative repetition penalty.

    At each step the probability of every token found among the last
    ``window`` context tokens is multiplied by ``penalty``; the result is
    renormalized, top-k filtered and nucleus sampled. The window runs over
    the whole context (prefix included), so decoding resumed from an earlier
    generated prefix sees the same history as uninterrupted decoding.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not 0 < penalty <= 1:
        raise ValueError("penalty must be in (0, 1]")
    context = list(prefix)
    out = []
    for _ in range(n_tokens):
        s = apply_temperature(model.dist(context), temperature)
        s = filter_top_k(windowed_penalty(s, context, window, penalty), k)
        tok = nucleus_sample(s, top_p, rng)
        context.append(tok)
        out.append(tok)
    return out
