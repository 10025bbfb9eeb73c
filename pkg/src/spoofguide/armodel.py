"""Next-token distribution providers.

:class:`NGramModel` stands in for the frozen autoregressive codec language
model: it only has to answer ``dist(prefix)`` with a probability vector over
the vocabulary. :class:`HMMSource` plays the part of natural speech, producing
the "real" token corpora that the n-gram model is trained on and that the
detectors learn to tell apart from generated text.
"""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .tokens import TokenSequence

__all__ = [
    "HMMSource",
    "MarkovModel",
    "NGramModel",
    "NextTokenModel",
    "banded_hmm",
    "hmm_sample",
    "load_ngram",
    "ngram_dist",
    "ngram_train",
    "save_ngram",
    "stationary_distribution",
    "sticky_markov_model",
]

FORMAT_VERSION = 1


@runtime_checkable
class NextTokenModel(Protocol):
    vocab_size: int

    def dist(self, prefix: Sequence[int]) -> np.ndarray:
        """Probability vector of length ``vocab_size`` for the next token."""
        ...


@dataclass(frozen=True, eq=False)
class NGramModel:
    """Additively smoothed n-gram model with backoff to shorter contexts.

    ``counts`` maps a context tuple (0 to ``order - 1`` tokens) to a vector of
    next-token counts. ``dist`` uses the longest suffix of the prefix that was
    seen in training and smooths it with ``lam`` pseudo-counts per token; an
    unseen empty context (empty training corpus) gives the uniform
    distribution.
    """

    vocab_size: int
    order: int
    lam: float
    counts: dict = field(repr=False)
    _probs: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not self.lam > 0:
            raise ValueError(f"smoothing must be positive, got {self.lam}")
        probs = {}
        for ctx, c in self.counts.items():
            c = np.asarray(c, dtype=np.float64)
            p = (c + self.lam) / (c.sum() + self.vocab_size * self.lam)
            p.setflags(write=False)
            probs[ctx] = p
        uniform = np.full(self.vocab_size, 1.0 / self.vocab_size)
        uniform.setflags(write=False)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_uniform", uniform)

    def dist(self, prefix: Sequence[int]) -> np.ndarray:
        k = min(self.order - 1, len(prefix))
        tail = tuple(int(t) for t in prefix[len(prefix) - k :]) if k else ()
        for start in range(len(tail) + 1):
            p = self._probs.get(tail[start:])
            if p is not None:
                return p
        return self._uniform

    def __eq__(self, other):
        if not isinstance(other, NGramModel):
            return NotImplemented
        if (self.vocab_size, self.order, self.lam) != (other.vocab_size, other.order, other.lam):
            return False
        if self.counts.keys() != other.counts.keys():
            return False
        return all(np.array_equal(self.counts[k], other.counts[k]) for k in self.counts)

    def to_dict(self) -> dict:
        rows = []
        for ctx in sorted(self.counts, key=lambda c: (len(c), c)):
            vec = self.counts[ctx]
            for tok in np.flatnonzero(vec):
                rows.append([*ctx, int(tok), int(vec[tok])])
        return {
            "format_version": FORMAT_VERSION,
            "type": "ngram",
            "vocab_size": self.vocab_size,
            "order": self.order,
            "lambda": self.lam,
            "counts": rows,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> NGramModel:
        if doc.get("type") != "ngram":
            raise ValueError(f"not an n-gram model document (type={doc.get('type')!r})")
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
        V = int(doc["vocab_size"])
        order = int(doc["order"])
        counts: dict = {}
        for row in doc["counts"]:
            *ctx, tok, n = row
            if len(ctx) >= order:
                raise ValueError(f"context {ctx} too long for order {order}")
            vec = counts.setdefault(tuple(int(c) for c in ctx), np.zeros(V, dtype=np.int64))
            vec[int(tok)] = int(n)
        return cls(V, order, float(doc["lambda"]), counts)


def ngram_train(
    corpus: Iterable[TokenSequence],
    n: int,
    lam: float,
    vocab_size: int | None = None,
) -> NGramModel:
    """Count every window of up to ``n`` tokens in ``corpus``.

    Positions near the start of a sequence contribute to the shorter context
    orders only. ``vocab_size`` is required when the corpus is empty.
    """
    corpus = list(corpus)
    if vocab_size is None:
        if not corpus:
            raise ValueError("vocab_size is required for an empty corpus")
        vocab_size = corpus[0].vocab_size
    if any(s.vocab_size != vocab_size for s in corpus):
        raise ValueError("all corpus sequences must share one vocab_size")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts: dict = defaultdict(lambda: np.zeros(vocab_size, dtype=np.int64))
    for seq in corpus:
        toks = seq.tokens
        for i, tok in enumerate(toks):
            for k in range(min(n - 1, i) + 1):
                counts[toks[i - k : i]][tok] += 1
    return NGramModel(vocab_size, n, float(lam), dict(counts))


def ngram_dist(model: NGramModel, prefix: Sequence[int]) -> np.ndarray:
    return model.dist(prefix)


def save_ngram(model: NGramModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def load_ngram(path: str | os.PathLike) -> NGramModel:
    with open(path, encoding="utf-8") as fh:
        return NGramModel.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """First-order model given by an explicit row-stochastic transition matrix.

    The empty prefix uses ``initial``. Handy for hand-built test models.
    """

    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        T = np.array(self.transition, dtype=np.float64)
        p0 = np.array(self.initial, dtype=np.float64)
        _check_stochastic(T, "transition")
        _check_stochastic(p0[None, :], "initial")
        T.setflags(write=False)
        p0.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "initial", p0)

    @property
    def vocab_size(self) -> int:
        return self.transition.shape[1]

    def dist(self, prefix: Sequence[int]) -> np.ndarray:
        if len(prefix) == 0:
            return self.initial
        return self.transition[int(prefix[-1])]


def sticky_markov_model(vocab_size: int = 2, stay: float = 0.8) -> MarkovModel:
    """Loop-prone chain: keep the last token with probability ``stay``.

    The remaining mass is spread evenly over the other tokens. With the
    defaults this is a two-token chain whose constant runs average five
    tokens under plain ancestral sampling.
    """
    if vocab_size < 2:
        raise ValueError("need at least two tokens")
    off = (1.0 - stay) / (vocab_size - 1)
    T = np.full((vocab_size, vocab_size), off)
    np.fill_diagonal(T, stay)
    return MarkovModel(T, np.full(vocab_size, 1.0 / vocab_size))


def _check_stochastic(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if np.any(mat < 0) or not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if not np.allclose(mat.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"{name} rows must sum to 1")


@dataclass(frozen=True, eq=False)
class HMMSource:
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        p0 = np.array(self.initial, dtype=np.float64)
        A = np.array(self.transition, dtype=np.float64)
        B = np.array(self.emission, dtype=np.float64)
        _check_stochastic(p0[None, :], "initial")
        _check_stochastic(A, "transition")
        _check_stochastic(B, "emission")
        S = p0.shape[0]
        if A.shape != (S, S) or B.shape[0] != S:
            raise ValueError("inconsistent HMM shapes")
        for arr in (p0, A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "initial", p0)
        object.__setattr__(self, "transition", A)
        object.__setattr__(self, "emission", B)

    @property
    def state_count(self) -> int:
        return self.initial.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.emission.shape[1]

    def log_likelihood(self, tokens: Sequence[int]) -> float:
        """Scaled forward-algorithm log-likelihood of ``tokens``."""
        alpha = self.initial.copy()
        ll = 0.0
        for i, tok in enumerate(tokens):
            if i:
                alpha = alpha @ self.transition
            alpha = alpha * self.emission[:, int(tok)]
            norm = alpha.sum()
            if norm == 0.0:
                return -np.inf
            ll += np.log(norm)
            alpha /= norm
        return float(ll)


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``transition`` for eigenvalue 1, normalized."""
    A = np.asarray(transition, dtype=np.float64)
    w, v = np.linalg.eig(A.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, i])
    pi = pi / pi.sum()
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def hmm_sample(source: HMMSource, T: int, rng: np.random.Generator) -> TokenSequence:
    """Draw ``T`` tokens by the forward generative process.

    Uses exactly ``2 * T`` uniforms from ``rng`` (state then emission per step).
    """
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    u = rng.random(2 * T)
    cum_init = np.cumsum(source.initial)
    cum_trans = np.cumsum(source.transition, axis=1)
    cum_emit = np.cumsum(source.emission, axis=1)
    S, V = source.state_count, source.vocab_size
    out = np.empty(T, dtype=np.int64)
    state = min(int(np.searchsorted(cum_init, u[0] * cum_init[-1], side="right")), S - 1)
    for t in range(T):
        if t:
            row = cum_trans[state]
            state = min(int(np.searchsorted(row, u[2 * t] * row[-1], side="right")), S - 1)
        row = cum_emit[state]
        out[t] = min(int(np.searchsorted(row, u[2 * t + 1] * row[-1], side="right")), V - 1)
    return TokenSequence(V, tuple(out.tolist()))


def banded_hmm(
    vocab_size: int,
    n_states: int,
    seed: int = 0,
    stay: float = 0.1,
    forward: float = 0.8,
    backward: float = 0.0,
    emission_concentration: float = 0.03,
) -> HMMSource:
    """HMM whose hidden states walk a ring with a banded transition matrix.

    Each state keeps itself with probability ``stay``, steps to the next
    state on the ring with ``forward`` and to the previous one with
    ``backward``; whatever is left is spread uniformly. Emission rows are
    drawn from a symmetric Dirichlet with the given concentration, so each
    state emits from its own small token subset. The hidden walk gives
    structure beyond a token bigram, which a low-order n-gram model cannot
    capture.
    """
    if n_states < 1:
        raise ValueError("n_states must be positive")
    rest = 1.0 - stay - forward - backward
    if min(stay, forward, backward) < 0 or rest < -1e-12:
        raise ValueError("stay, forward and backward must be non-negative and sum to <= 1")
    rng = np.random.default_rng(seed)
    S = n_states
    A = np.full((S, S), max(rest, 0.0) / S)
    for s in range(S):
        A[s, s] += stay
        A[s, (s + 1) % S] += forward
        A[s, (s - 1) % S] += backward
    A /= A.sum(axis=1, keepdims=True)
    B = rng.dirichlet(np.full(vocab_size, emission_concentration), size=S)
    B = np.maximum(B, 1e-12)
    B /= B.sum(axis=1, keepdims=True)
    return HMMSource(stationary_distribution(A), A, B)
