"""Token-level real/synthetic segment detectors and their evaluation metrics.

The reference detector is logistic regression over hashed unigram and
bigram counts. Hashing uses the splitmix64 finalizer on a tagged 64-bit key,
reduced modulo the feature dimension:

* unigram ``t``      -> key ``(1 << 60) | t``
* bigram ``(a, b)``  -> key ``(2 << 60) | (a << 30) | b``

so token ids must be below ``2**30``. The hash is fixed (``HASH_ID``) so a
serialized detector scores identically on any platform.

Scores are probabilities that a segment is real. Anything with a ``spec``
attribute and a ``score(tokens)`` method can stand in for a detector.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import sparse
from scipy.special import expit
from scipy.stats import rankdata

from .tokens import Segment, SegmentSpec, TokenSequence, crop_windows

__all__ = [
    "BANK_SPECS",
    "DetectorBank",
    "FeatureLogisticDetector",
    "SegmentDetector",
    "TrainConfig",
    "accuracy_at",
    "auroc",
    "auroc_null_std",
    "bce_loss",
    "bce_train",
    "build_training_set",
    "evaluate_bank",
    "evaluate_detector",
    "featurize",
    "featurize_batch",
    "load_bank",
    "load_detector",
    "macro_f1_at",
    "save_bank",
    "save_detector",
    "score_segment",
    "train_bank",
]

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HASH_ID = "splitmix64-ngram-v1"
DEFAULT_FEATURE_DIM = 4096

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_UNIGRAM_TAG = np.uint64(1 << 60)
_BIGRAM_TAG = np.uint64(2 << 60)

# (name, spec) for the five bank members; names double as file stems.
BANK_SPECS: dict[str, SegmentSpec] = {
    "m10": SegmentSpec(10, 1),
    "m25": SegmentSpec(25, 1),
    "m50": SegmentSpec(50, 1),
    "m50_25": SegmentSpec(25, 2),
    "m50_10": SegmentSpec(10, 5),
}


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return (x ^ (x >> np.uint64(31))) & _M64


def _buckets(tokens: np.ndarray, D: int) -> tuple[np.ndarray, np.ndarray]:
    """Unigram and bigram bucket ids for a (N, L) token matrix."""
    t = tokens.astype(np.uint64)
    uni = _splitmix64(_UNIGRAM_TAG | t) % np.uint64(D)
    if t.shape[1] > 1:
        big = _splitmix64(_BIGRAM_TAG | (t[:, :-1] << np.uint64(30)) | t[:, 1:]) % np.uint64(D)
    else:
        big = np.empty((t.shape[0], 0), dtype=np.uint64)
    return uni.astype(np.int64), big.astype(np.int64)


def _as_token_matrix(segments: Sequence) -> np.ndarray:
    if isinstance(segments, np.ndarray) and segments.ndim == 2:
        return segments.astype(np.int64, copy=False)
    rows =[s.tokens if isinstance(s, Segment) else tuple(s) for s in segments]
    if not rows:
        return np.zeros((0, 0), dtype=np.int64)
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"segments have mixed lengths {sorted(lengths)}")
    mat = np.array(rows, dtype=np.int64).reshape(len(rows), lengths.pop())
    if mat.size and (mat.min() < 0 or mat.max() >= 1 << 30):
        raise ValueError("token ids must lie in [0, 2**30)")
    return mat


def featurize_batch(segments: Sequence, D: int) -> sparse.csr_matrix:
    """Hashed unigram+bigram count matrix, one row per equal-length segment."""
    if D < 2:
        raise ValueError("feature dimension must be >= 2")
    mat = _as_token_matrix(segments)
    n = mat.shape[0]
    if n == 0 or mat.shape[1] == 0:
        return sparse.csr_matrix((n, D), dtype=np.float64)
    uni, big = _buckets(mat, D)
    cols = np.concatenate([uni, big], axis=1)
    rows = np.repeat(np.arange(n), cols.shape[1])
    X = sparse.coo_matrix(
        (np.ones(cols.size), (rows, cols.ravel())), shape=(n, D)
    ).tocsr()
    X.sum_duplicates()
    return X


def featurize(segment: Sequence[int], vocab_size: int, D: int = DEFAULT_FEATURE_DIM) -> dict[int, float]:
    """Sparse hashed feature vector of a single segment as ``{bucket: count}``."""
    toks = segment.tokens if isinstance(segment, Segment) else tuple(segment)
    if any(not 0 <= t < vocab_size for t in toks):
        raise ValueError(f"token ids must lie in [0, {vocab_size})")
    if not toks:
        if D < 2:
            raise ValueError("feature dimension must be >= 2")
        return {}
    row = featurize_batch([toks], D)
    return {int(j): float(v) for j, v in zip(row.indices, row.data)}


@runtime_checkable
class SegmentDetector(Protocol):
    spec: SegmentSpec

    def score(self, tokens: Sequence[int]) -> float: ...


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings for :func:`bce_train`.

    The defaults reproduce the published AdamW values; plain gradient descent
    on raw count features usually wants a much larger ``learning_rate``.
    """

    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True, eq=False)
class FeatureLogisticDetector:
    spec: SegmentSpec
    feature_dim: int
    weights: np.ndarray
    bias: float = 0.0
    loss_history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (self.feature_dim,):
            raise ValueError(f"weights must have shape ({self.feature_dim},)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @classmethod
    def zeros(cls, spec: SegmentSpec, feature_dim: int = DEFAULT_FEATURE_DIM):
        return cls(spec, feature_dim, np.zeros(feature_dim), 0.0)

    def _check_length(self, n: int) -> None:
        if n != self.spec.length:
            raise ValueError(
                f"{self.spec.name} expects segments of length {self.spec.length}, got {n}"
            )

    def logits(self, segments: Sequence) -> np.ndarray:
        mat = _as_token_matrix(segments)
        if mat.shape[0]:
            self._check_length(mat.shape[1])
        return featurize_batch(mat, self.feature_dim) @ self.weights + self.bias

    def score(self, tokens: Sequence[int]) -> float:
        toks = tokens.tokens if isinstance(tokens, Segment) else tuple(tokens)
        self._check_length(len(toks))
        return float(expit(self.logits([toks])[0]))

    def score_batch(self, segments: Sequence) -> np.ndarray:
        return expit(self.logits(segments))

    def __eq__(self, other):
        if not isinstance(other, FeatureLogisticDetector):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.feature_dim == other.feature_dim
            and self.bias == other.bias
            and np.array_equal(self.weights, other.weights)
        )

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "spec": {"length": self.spec.length, "stride": self.spec.stride},
            "feature_dim": self.feature_dim,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "hash_id": HASH_ID,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> FeatureLogisticDetector:
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
        if doc.get("hash_id") != HASH_ID:
            raise ValueError(f"unknown feature hash {doc.get('hash_id')!r}")
        spec = SegmentSpec(int(doc["spec"]["length"]), int(doc["spec"]["stride"]))
        return cls(spec, int(doc["feature_dim"]), np.array(doc["weights"], dtype=np.float64), float(doc["bias"]))


def score_segment(detector: SegmentDetector, segment: Sequence[int] | Segment) -> float:
    toks = segment.tokens if isinstance(segment, Segment) else tuple(segment)
    if len(toks) != detector.spec.length:
        raise ValueError(
            f"detector {detector.spec.name} expects length {detector.spec.length}, "
            f"got {len(toks)}"
        )
    return float(detector.score(toks))


def score_many(detector: SegmentDetector, segments: Sequence) -> np.ndarray:
    batch = getattr(detector, "score_batch", None)
    if batch is not None:
        return np.asarray(batch(segments), dtype=np.float64)
    return np.array([score_segment(detector, s) for s in segments], dtype=np.float64)


def bce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy computed from logits (numerically stable)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def bce_train(
    examples: Sequence[tuple[Segment | Sequence[int], int]],
    spec: SegmentSpec,
    cfg: TrainConfig = TrainConfig(),
    feature_dim: int = DEFAULT_FEATURE_DIM,
) -> FeatureLogisticDetector:
    """Fit a hashed-feature logistic detector by mini-batch gradient descent.

    Minimizes mean BCE plus ``weight_decay / 2 * ||w||**2`` (the bias is not
    decayed) from zero initialization. Batches are drawn from a permutation
    seeded by ``cfg.seed``, so training is bit-for-bit reproducible. The
    returned detector carries ``loss_history``: the full-set objective
    before training and after each epoch.
    """
    segs = [s for s, _ in examples]
    y = np.array([int(lbl) for _, lbl in examples], dtype=np.float64)
    if len(set(y.tolist())) < 2:
        raise ValueError("degenerate labels: training needs both real and fake examples")
    if not set(y.tolist()) <= {0.0, 1.0}:
        raise ValueError("labels must be 0 or 1")
    mat = _as_token_matrix(segs)
    if mat.shape[1] != spec.length:
        raise ValueError(f"segments have length {mat.shape[1]}, spec expects {spec.length}")
    X = featurize_batch(mat, feature_dim)
    n = X.shape[0]
    w = np.zeros(feature_dim)
    b = 0.0
    rng = np.random.default_rng(cfg.seed)
    lr, wd = cfg.learning_rate, cfg.weight_decay

    def objective() -> float:
        return bce_loss(X @ w + b, y) + 0.5 * wd * float(w @ w)

    history = [objective()]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb = X[idx]
            resid = expit(Xb @ w + b) - y[idx]
            grad_w = Xb.T @ resid / idx.size + wd * w
            grad_b = resid.mean()
            w -= lr * grad_w
            b -= lr * grad_b
        history.append(objective())
    logger.debug("trained %s: final objective %.6f", spec.name, history[-1])
    return FeatureLogisticDetector(spec, feature_dim, w, b, tuple(history))


def build_training_set(
    real_corpus: Iterable[TokenSequence],
    fake_corpus: Iterable[TokenSequence],
    spec: SegmentSpec,
    hop: int | None = None,
    seed: int = 0,
    random_offset: bool = False,
) -> tuple[list[tuple[Segment, int]], dict[int, int]]:
    """Labelled segments (real = 1, fake = 0) for one resolution.

    Source windows of ``spec.window`` tokens are cropped with ``hop``
    (default: non-overlapping) and skip sampled to ``spec.length``. With
    ``random_offset`` each sequence starts cropping at a uniformly drawn
    offset in ``[0, hop)``. Returns the seeded shuffle of all examples and
    the per-label counts.
    """
    hop = spec.window if hop is None else hop
    if hop < 1:
        raise ValueError("hop must be >= 1")
    rng = np.random.default_rng(seed)
    examples: list[tuple[Segment, int]] = []
    counts = {1: 0, 0: 0}
    vocab = None
    for label, corpus in ((1, real_corpus), (0, fake_corpus)):
        for seq in corpus:
            if vocab is None:
                vocab = seq.vocab_size
            elif seq.vocab_size != vocab:
                raise ValueError("real and fake corpora must share one vocabulary")
            offset = 0
            if random_offset and len(seq) >= spec.window:
                offset = int(rng.integers(0, min(hop, len(seq) - spec.window + 1)))
            segs = crop_windows(seq, spec, hop, offset)
            examples.extend((s, label) for s in segs)
            counts[label] += len(segs)
    for label, name in ((1, "real"), (0, "fake")):
        if counts[label] == 0:
            raise ValueError(
                f"no {name} segments of window {spec.window} for spec {spec.name}"
            )
    order = rng.permutation(len(examples))
    return [examples[i] for i in order], counts


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC: P(random positive outranks random negative), ties 1/2."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_null_std(n_pos: int, n_neg: int) -> float:
    """Standard deviation of AUROC under random labelling (no ties)."""
    return math.sqrt((n_pos + n_neg + 1) / (12.0 * n_pos * n_neg))


def accuracy_at(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """Fraction correct when ``score >= threshold`` predicts the positive class."""
    s, y = _check_binary(scores, labels)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def macro_f1_at(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """Unweighted mean of the two per-class F1 scores at ``threshold``.

    Predictions use ``score >= threshold``. A class with no true, false
    positive or false negative counts (nothing predicted, nothing present)
    gets F1 = 0.
    """
    s, y = _check_binary(scores, labels)
    pred = (s >= threshold).astype(np.int64)
    f1s = []
    for c in (1, 0):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1s))


@dataclass(frozen=True)
class DetectorBank:
    """The five resolution-specific detectors used by hierarchical decoding."""

    m10: SegmentDetector
    m25: SegmentDetector
    m50: SegmentDetector
    m50_25: SegmentDetector
    m50_10: SegmentDetector

    def __post_init__(self):
        for name, det in self.members().items():
            if det.spec != BANK_SPECS[name]:
                raise ValueError(
                    f"bank member {name} has spec {det.spec}, expected {BANK_SPECS[name]}"
                )

    def members(self) -> dict[str, SegmentDetector]:
        return {name: getattr(self, name) for name in BANK_SPECS}


def train_bank(
    real_corpus: Sequence[TokenSequence],
    fake_corpus: Sequence[TokenSequence],
    cfg: TrainConfig = TrainConfig(),
    feature_dim: int = DEFAULT_FEATURE_DIM,
    hop: int | None = None,
) -> DetectorBank:
    members = {}
    for i, (name, spec) in enumerate(BANK_SPECS.items()):
        examples, counts = build_training_set(real_corpus, fake_corpus, spec, hop, seed=cfg.seed + i)
        logger.info("training %s on %d real / %d fake segments", name, counts[1], counts[0])
        members[name] = bce_train(examples, spec, cfg, feature_dim)
    return DetectorBank(**members)


def evaluate_detector(
    detector: SegmentDetector,
    real_corpus: Sequence[TokenSequence],
    fake_corpus: Sequence[TokenSequence],
    hop: int | None = None,
    threshold: float = 0.5,
) -> dict:
    examples, counts = build_training_set(real_corpus, fake_corpus, detector.spec, hop)
    scores = score_many(detector, [s for s, _ in examples])
    labels = np.array([lbl for _, lbl in examples])
    return {
        "auroc": auroc(scores, labels),
        "accuracy": accuracy_at(scores, labels, threshold),
        "macro_f1": macro_f1_at(scores, labels, threshold),
        "n_real": counts[1],
        "n_fake": counts[0],
        "null_std": auroc_null_std(counts[1], counts[0]),
    }


def evaluate_bank(
    bank: DetectorBank,
    real_corpus: Sequence[TokenSequence],
    fake_corpus: Sequence[TokenSequence],
    hop: int | None = None,
) -> list[dict]:
    rows = []
    for name, det in bank.members().items():
        row = {"detector": name, "length": det.spec.length, "stride": det.spec.stride}
        row.update(evaluate_detector(det, real_corpus, fake_corpus, hop))
        rows.append(row)
    return rows


def save_detector(detector: FeatureLogisticDetector, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(detector.to_dict(), fh)
        fh.write("\n")


def load_detector(path: str | os.PathLike) -> FeatureLogisticDetector:
    with open(path, encoding="utf-8") as fh:
        return FeatureLogisticDetector.from_dict(json.load(fh))


def save_bank(bank: DetectorBank, directory: str | os.PathLike) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, det in bank.members().items():
        save_detector(det, d / f"{name}.json")


def load_bank(directory: str | os.PathLike) -> DetectorBank:
    d = Path(directory)
    missing = [n for n in BANK_SPECS if not (d / f"{n}.json").is_file()]
    if missing:
        raise FileNotFoundError(f"detector bank {d} is missing {', '.join(missing)}")
    return DetectorBank(**{n: load_detector(d / f"{n}.json") for n in BANK_SPECS})
