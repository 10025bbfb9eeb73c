"""Hierarchical sampling with progressive discriminator pruning.

One decoding round spawns ``B0`` candidate chunks of ``L1`` tokens, keeps the
``B1`` best according to the 10-token detector, extends the survivors to
``L2`` tokens, keeps the ``B2`` best according to the 25-token detector,
extends those to ``L3`` tokens and finally picks one chunk by aggregating its
ranks under the three 50-token-window detectors. Rounds repeat until the
requested number of tokens has been generated.

Detectors only ever see the chunk produced in the current round. The sampler
memory of the winning beam carries over into the next round. Each candidate
owns a random stream derived from ``(round_seed, candidate_index)``, so the
outcome does not depend on the order in which beams are processed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .armodel import NextTokenModel
from .detector import DetectorBank, SegmentDetector, score_segment
from .sampling import (
    EASParams,
    EASState,
    RASParams,
    eas_generate,
    windowed_penalty_generate,
)
from .tokens import TokenSequence, skip_sample

__all__ = [
    "Beam",
    "HierParams",
    "RankAggregate",
    "RoundLog",
    "aggregate_ranks",
    "extend",
    "final_stage_scores",
    "hier_generate",
    "prune",
    "spawn_candidates",
    "warmup",
    "write_round_logs",
]

# Relative slack when comparing aggregate ranks for equality.
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class HierParams:
    """Round structure of hierarchical decoding.

    ``rank_weights`` are ``(w50, w25, w10)``. When ``ras`` is set the
    windowed repetition-penalty sampler replaces entropy-aware sampling for
    warmup and every chunk (the hierarchical RAS-style variant).
    """

    warmup_len: int = 20
    stage_lens: tuple[int, int, int] = (10, 25, 50)
    beams: tuple[int, int, int] = (8, 5, 3)
    max_len: int = 120
    rank_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    eas: EASParams = field(default_factory=EASParams)
    ras: RASParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "stage_lens", tuple(int(x) for x in self.stage_lens))
        object.__setattr__(self, "beams", tuple(int(x) for x in self.beams))
        object.__setattr__(self, "rank_weights", tuple(float(x) for x in self.rank_weights))
        L1, L2, L3 = self.stage_lens
        B0, B1, B2 = self.beams
        if self.warmup_len < 0:
            raise ValueError("warmup_len must be >= 0")
        if not 0 < L1 < L2 < L3:
            raise ValueError(f"stage lengths must be strictly increasing positives, got {self.stage_lens}")
        if not B0 >= B1 >= B2 >= 1:
            raise ValueError(f"beams must satisfy B0 >= B1 >= B2 >= 1, got {self.beams}")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        if self.max_len < self.warmup_len:
            raise ValueError("max_len must be >= warmup_len")
        w = self.rank_weights
        if len(w) != 3 or any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValueError("rank weights must be three non-negative values, not all zero")

    @property
    def sampler(self) -> EASParams | RASParams:
        return self.ras if self.ras is not None else self.eas


@dataclass
class Beam:
    """One in-flight hypothesis of the current round.

    ``chunk`` holds only the tokens generated this round; ``prefix`` is the
    shared context the round started from.
    """

    prefix: tuple[int, ...]
    chunk: list[int]
    eas_state: EASState
    stream_seed: tuple[int, int]
    rng: np.random.Generator = field(repr=False)
    last_score: float | None = None

    @property
    def index(self) -> int:
        return self.stream_seed[1]


@dataclass
class RoundLog:
    round_index: int
    stage_lens: tuple[int, int, int]
    stage1_scores: list[float] | None
    stage1_kept: list[int]
    stage2_scores: list[float] | None
    stage2_kept: list[int]
    final_streams: list[int]
    final_detectors: list[str]
    s50: list[float]
    s25: list[float]
    s10: list[float]
    r50: list[float]
    r25: list[float]
    r10: list[float]
    R: list[float]
    final_scores: dict[str, list[float]]
    chosen: int
    chosen_stream: int
    chunk: list[int]
    round_seed: int

    @property
    def beam_counts(self) -> tuple[int, int, int]:
        return (len(self.stage1_scores or self.stage1_kept), len(self.stage1_kept), len(self.final_streams))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RankAggregate:
    r50: np.ndarray
    r25: np.ndarray
    r10: np.ndarray
    R: np.ndarray
    best: int


def _sample_chunk(model, context, n, params, rng, state):
    if isinstance(params, RASParams):
        toks = windowed_penalty_generate(
            model, context, n, params.top_k, params.top_p, params.window,
            params.penalty, rng, params.temperature,
        )
        return toks, state
    return eas_generate(model, context, n, params, rng, state)


def warmup(
    model: NextTokenModel,
    prefix: Sequence[int],
    params: HierParams,
    rng: np.random.Generator,
    state: EASState | None = None,
) -> tuple[list[int], EASState]:
    """Extend ``prefix`` by ``params.warmup_len`` sampled tokens."""
    state = EASState() if state is None else state
    if params.warmup_len == 0:
        return list(prefix), state
    toks, state = _sample_chunk(model, list(prefix), params.warmup_len, params.sampler, rng, state)
    return list(prefix) + toks, state


def spawn_candidates(
    model: NextTokenModel,
    prefix: Sequence[int],
    shared_state: EASState,
    B0: int,
    L1: int,
    params: EASParams | RASParams,
    root_seed: int,
) -> list[Beam]:
    if B0 < 1:
        raise ValueError("B0 must be >= 1")
    prefix = tuple(prefix)
    beams = []
    for i in range(B0):
        rng = np.random.default_rng([root_seed, i])
        toks, state = _sample_chunk(model, list(prefix), L1, params, rng, shared_state)
        beams.append(Beam(prefix, toks, state, (root_seed, i), rng))
    return beams


def extend(
    beams: Sequence[Beam], model: NextTokenModel, delta: int, params: EASParams | RASParams
) -> list[Beam]:
    """Grow every beam by ``delta`` tokens on its own state and stream."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    for b in beams:
        toks, b.eas_state = _sample_chunk(
            model, list(b.prefix) + b.chunk, delta, params, b.rng, b.eas_state
        )
        b.chunk.extend(toks)
    return list(beams)


def _view(chunk: Sequence[int], detector: SegmentDetector, trailing: bool = False) -> list[int]:
    spec = detector.spec
    if len(chunk) != spec.window and not (trailing and len(chunk) > spec.window):
        raise ValueError(
            f"detector {spec.name} needs a {spec.window}-token chunk, got {len(chunk)}"
        )
    window = list(chunk[len(chunk) - spec.window :])
    return skip_sample(window, spec.stride)


def prune(beams: Sequence[Beam], detector: SegmentDetector, keep_n: int) -> list[Beam]:
    """Score every beam's chunk and keep the ``keep_n`` best (stable on ties).

    Each beam's ``last_score`` is updated, including the pruned ones.
    """
    if not 1 <= keep_n <= len(beams):
        raise ValueError(f"keep_n must be in [1, {len(beams)}], got {keep_n}")
    for b in beams:
        b.last_score = score_segment(detector, _view(b.chunk, detector))
    order = sorted(range(len(beams)), key=lambda i: -beams[i].last_score)
    return [beams[i] for i in order[:keep_n]]


def _fractional_ranks(scores: np.ndarray) -> np.ndarray:
    # rank 1 = highest score; ties share the mean of their positions
    return rankdata(-scores, method="average")


def _aggregate(lists: Sequence[np.ndarray], weights: Sequence[float]):
    ranks = [_fractional_ranks(s) for s in lists]
    R = sum(w * r for w, r in zip(weights, ranks))
    lead = lists[0]
    best = 0
    for i in range(1, R.shape[0]):
        tol = _TIE_TOL * max(1.0, abs(R[best]))
        if R[i] < R[best] - tol:
            best = i
        elif abs(R[i] - R[best]) <= tol and lead[i] > lead[best]:
            best = i
    return ranks, R, best


def aggregate_ranks(
    s50: Sequence[float],
    s25: Sequence[float],
    s10: Sequence[float],
    weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
) -> RankAggregate:
    """Weighted rank aggregation across the three final-stage detectors.

    Rank 1 is the highest score; tied scores share their mean rank. The
    winner minimizes ``w50*r50 + w25*r25 + w10*r10``; ties go to the higher
    ``s50`` score and then to the lower index.
    """
    lists = [np.asarray(s, dtype=np.float64) for s in (s50, s25, s10)]
    n = lists[0].shape[0]
    if n == 0 or any(s.shape != (n,) for s in lists):
        raise ValueError("score lists must be non-empty and equally long")
    if len(weights) != 3:
        raise ValueError("need three rank weights")
    (r50, r25, r10), R, best = _aggregate(lists, weights)
    return RankAggregate(r50, r25, r10, R, best)


def final_stage_scores(
    beams: Sequence[Beam], bank: DetectorBank
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores of each full chunk under m50, m50_25 (stride 2) and m50_10 (stride 5)."""
    out = []
    for det in (bank.m50, bank.m50_25, bank.m50_10):
        out.append(np.array([score_segment(det, _view(b.chunk, det)) for b in beams]))
    return out[0], out[1], out[2]


def _check_bank(bank: DetectorBank, hp: HierParams) -> None:
    L1, L2, L3 = hp.stage_lens
    expected = {"m10": (L1, 1), "m25": (L2, 1), "m50": (L3, 1)}
    for name, (length, stride) in expected.items():
        spec = getattr(bank, name).spec
        if (spec.length, spec.stride) != (length, stride):
            raise ValueError(
                f"bank member {name} has spec {spec}, stage lengths need ({length}, {stride})"
            )
    for name in ("m50_25", "m50_10"):
        if getattr(bank, name).spec.window != L3:
            raise ValueError(f"bank member {name} does not cover a {L3}-token window")


def _final_selection(beams, bank, hp, l3):
    """Scores, ranks and winner for the surviving beams.

    In a short final round the 50-token-window detectors may not fit; the
    longest contiguous detector that fits the chunk's trailing window is
    used instead, and with none the first beam wins.
    """
    w50, w25, w10 = hp.rank_weights
    slots = [("m50", bank.m50, w50), ("m50_25", bank.m50_25, w25), ("m50_10", bank.m50_10, w10)]
    fits = [(n, d, w) for n, d, w in slots if d.spec.window <= l3]
    if not fits:
        fits = [(n, d, 1.0) for n, d in (("m25", bank.m25), ("m10", bank.m10)) if d.spec.window <= l3][:1]
    if not fits:
        return [], {}, [], 0
    scores = {
        n: np.array([score_segment(d, _view(b.chunk, d, trailing=True)) for b in beams])
        for n, d, _ in fits
    }
    names = [n for n, _, _ in fits]
    ranks, R, best = _aggregate([scores[n] for n in names], [w for _, _, w in fits])
    return names, scores, dict(zip(names, ranks)) | {"R": R}, best


def hier_generate(
    model: NextTokenModel,
    bank: DetectorBank,
    prefix: Sequence[int],
    hp: HierParams,
    rng: np.random.Generator,
) -> tuple[TokenSequence, list[RoundLog]]:
    """Generate exactly ``hp.max_len`` tokens after ``prefix``.

    Returns the generated tokens (warmup included, prefix excluded) and one
    :class:`RoundLog` per round. A final round with fewer than ``L3`` tokens
    of budget left runs with clipped stage lengths; a pruning stage whose
    clipped length no longer matches its detector passes all beams through.
    """
    _check_bank(bank, hp)
    L1, L2, L3 = hp.stage_lens
    B0, B1, B2 = hp.beams
    sp = hp.sampler
    prefix = list(prefix)
    y, state = warmup(model, prefix, hp, rng)
    generated = y[len(prefix) :]
    logs: list[RoundLog] = []
    while len(generated) < hp.max_len:
        rem = hp.max_len - len(generated)
        l1, l2, l3 = (min(L, rem) for L in hp.stage_lens)
        round_seed = int(rng.integers(0, 2**63))
        beams = spawn_candidates(model, prefix + generated, state, B0, l1, sp, round_seed)

        s1 = None
        if l1 == bank.m10.spec.length:
            kept = prune(beams, bank.m10, min(B1, len(beams)))
            s1 = [b.last_score for b in beams]
            beams = kept
        kept1 = [b.index for b in beams]

        if l2 > l1:
            extend(beams, model, l2 - l1, sp)
        s2 = None
        if l2 > l1 and l2 == bank.m25.spec.length:
            scored = beams
            beams = prune(beams, bank.m25, min(B2, len(beams)))
            s2 = [b.last_score for b in scored]
        kept2 = [b.index for b in beams]

        if l3 > l2:
            extend(beams, model, l3 - l2, sp)
        names, scores, ranks, best = _final_selection(beams, bank, hp, l3)
        winner = beams[best]

        def _get(d, key):
            return [float(x) for x in d[key]] if key in d else []

        logs.append(
            RoundLog(
                round_index=len(logs),
                stage_lens=(l1, l2, l3),
                stage1_scores=s1,
                stage1_kept=kept1,
                stage2_scores=s2,
                stage2_kept=kept2,
                final_streams=[b.index for b in beams],
                final_detectors=names,
                s50=_get(scores, "m50"),
                s25=_get(scores, "m50_25"),
                s10=_get(scores, "m50_10"),
                r50=_get(ranks, "m50"),
                r25=_get(ranks, "m50_25"),
                r10=_get(ranks, "m50_10"),
                R=_get(ranks, "R"),
                final_scores={n: _get(scores, n) for n in names},
                chosen=best,
                chosen_stream=winner.index,
                chunk=list(winner.chunk),
                round_seed=round_seed,
            )
        )
        generated.extend(winner.chunk)
        state = winner.eas_state
    return TokenSequence(model.vocab_size, tuple(generated[: hp.max_len])), logs


def write_round_logs(logs: Sequence[RoundLog], path: str | os.PathLike) -> None:
    """One JSON object per round."""
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps(log.to_dict()) + "\n")
