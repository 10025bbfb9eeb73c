"""Token sequences, corpus files and multi-resolution segment construction.

A corpus file is UTF-8 text. The first line declares the vocabulary size as
``#vocab=<V>``; every later non-empty line is one sequence of space-separated
decimal token ids, and later lines starting with ``#`` are comments. An empty
sequence is written as a line holding a single ``-`` so that it survives the
round trip.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CorpusFormatError",
    "Segment",
    "SegmentSpec",
    "TokenSequence",
    "crop_segments",
    "crop_windows",
    "format_corpus",
    "parse_corpus",
    "read_corpus",
    "skip_sample",
    "write_corpus",
]

EMPTY_MARKER = "-"


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files or out-of-vocabulary token ids."""


@dataclass(frozen=True)
class TokenSequence:
    """An immutable sequence of token ids over ``range(vocab_size)``."""

    vocab_size: int
    tokens: tuple[int, ...] = ()

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError(f"vocab_size must be positive, got {self.vocab_size}")
        toks = tuple(int(t) for t in self.tokens)
        for t in toks:
            if not 0 <= t < self.vocab_size:
                raise ValueError(
                    f"token id {t} outside vocabulary of size {self.vocab_size}"
                )
        object.__setattr__(self, "tokens", toks)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, item):
        return self.tokens[item]


@dataclass(frozen=True)
class SegmentSpec:
    """Detector input resolution.

    ``length`` is the token count after skip sampling and ``stride`` the
    sampling rate, so a segment is cut from a source window of
    ``length * stride`` tokens.
    """

    length: int
    stride: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"segment length must be positive, got {self.length}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def window(self) -> int:
        return self.length * self.stride

    @property
    def name(self) -> str:
        if self.stride == 1:
            return f"m{self.length}"
        return f"m{self.window}_{self.length}"


@dataclass(frozen=True)
class Segment:
    tokens: tuple[int, ...]
    spec: SegmentSpec
    source_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if len(self.tokens) != self.spec.length:
            raise ValueError(
                f"segment has {len(self.tokens)} tokens, spec expects {self.spec.length}"
            )
        if self.source_offset < 0:
            raise ValueError("source_offset must be non-negative")


def _tokens_of(seq) -> tuple[int, ...]:
    if isinstance(seq, TokenSequence):
        return seq.tokens
    return tuple(int(t) for t in seq)


def crop_segments(seq: TokenSequence | Sequence[int], L: int, hop: int) -> list[Segment]:
    """Cut contiguous windows of ``L`` tokens at offsets ``0, hop, 2*hop, ...``.

    Windows that would run past the end are dropped, never padded.
    """
    if L < 1 or hop < 1:
        raise ValueError("L and hop must be positive")
    toks = _tokens_of(seq)
    spec = SegmentSpec(L, 1)
    return [
        Segment(toks[o : o + L], spec, o) for o in range(0, len(toks) - L + 1, hop)
    ]


def skip_sample(seq_window: Sequence[int], r: int) -> list[int]:
    """Keep every ``r``-th token of a window, starting at index 0."""
    if r < 1:
        raise ValueError(f"skip-sampling rate must be positive, got {r}")
    return list(seq_window)[::r]


def crop_windows(
    seq: TokenSequence | Sequence[int],
    spec: SegmentSpec,
    hop: int | None = None,
    offset: int = 0,
) -> list[Segment]:
    """Segments for an arbitrary (length, stride) resolution.

    Source windows of ``spec.window`` tokens are cropped starting at
    ``offset`` with the given hop (default: non-overlapping) and then skip
    sampled down to ``spec.length`` tokens.
    """
    hop = spec.window if hop is None else hop
    toks = _tokens_of(seq)
    out = []
    for o in range(offset, len(toks) - spec.window + 1, hop):
        window = toks[o : o + spec.window]
        out.append(Segment(tuple(skip_sample(window, spec.stride)), spec, o))
    return out


def _parse_header(line: str, path) -> int:
    line = line.strip()
    if not line.startswith("#vocab="):
        raise CorpusFormatError(f"{path}:1: expected '#vocab=<V>' header, got {line!r}")
    try:
        vocab = int(line[len("#vocab=") :])
    except ValueError:
        raise CorpusFormatError(f"{path}:1: bad vocabulary size in {line!r}") from None
    if vocab < 1:
        raise CorpusFormatError(f"{path}:1: vocabulary size must be positive")
    return vocab


def parse_corpus(text: str, path: str | os.PathLike = "<string>") -> list[TokenSequence]:
    lines = text.splitlines()
    if not lines:
        raise CorpusFormatError(f"{path}: empty file, missing '#vocab=<V>' header")
    vocab = _parse_header(lines[0], path)
    out = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == EMPTY_MARKER:
            out.append(TokenSequence(vocab, ()))
            continue
        try:
            toks = [int(tok) for tok in line.split()]
        except ValueError:
            raise CorpusFormatError(
                f"{path}:{lineno}: malformed token line {line!r}"
            ) from None
        bad = [t for t in toks if not 0 <= t < vocab]
        if bad:
            raise CorpusFormatError(
                f"{path}:{lineno}: token id {bad[0]} outside declared vocabulary {vocab}"
            )
        out.append(TokenSequence(vocab, tuple(toks)))
    return out


def read_corpus(path: str | os.PathLike) -> list[TokenSequence]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh.read(), path)


def format_corpus(sequences: Iterable[TokenSequence], vocab_size: int | None = None) -> str:
    sequences = list(sequences)
    if vocab_size is None:
        if not sequences:
            raise ValueError("vocab_size is required when writing an empty corpus")
        vocab_size = sequences[0].vocab_size
    lines = [f"#vocab={vocab_size}"]
    for s in sequences:
        if s.vocab_size != vocab_size:
            raise ValueError(
                f"mixed vocabularies in corpus: {s.vocab_size} != {vocab_size}"
            )
        lines.append(" ".join(map(str, s.tokens)) if len(s) else EMPTY_MARKER)
    return "\n".join(lines) + "\n"


def write_corpus(
    path: str | os.PathLike,
    sequences: Iterable[TokenSequence],
    vocab_size: int | None = None,
) -> None:
    text = format_corpus(sequences, vocab_size)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def as_array(seq: TokenSequence | Sequence[int]) -> np.ndarray:
    return np.fromiter(_tokens_of(seq), dtype=np.int64)
