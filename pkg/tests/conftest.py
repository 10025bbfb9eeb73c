"""Shared fixtures: tiny models, constant and likelihood-based detector banks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from spoofguide.armodel import MarkovModel, banded_hmm, hmm_sample, ngram_train
from spoofguide.detector import BANK_SPECS, DetectorBank
from spoofguide.tokens import SegmentSpec


@dataclass(frozen=True)
class FixedDist:
    """Next-token model that ignores the prefix."""

    probs: tuple

    @property
    def vocab_size(self) -> int:
        return len(self.probs)

    def dist(self, prefix):
        return np.asarray(self.probs, dtype=np.float64)


@dataclass(frozen=True)
class ConstantDetector:
    spec: SegmentSpec
    value: float = 0.5

    def score(self, tokens):
        if len(tokens) != self.spec.length:
            raise ValueError("length mismatch")
        return self.value


@dataclass(frozen=True)
class LikelihoodDetector:
    """Scores a segment by its per-token likelihood under the true source."""

    spec: SegmentSpec
    source: object

    def score(self, tokens):
        if len(tokens) != self.spec.length:
            raise ValueError("length mismatch")
        return float(np.exp(self.source.log_likelihood(list(tokens)) / len(tokens)))


@dataclass(frozen=True)
class TokenSumDetector:
    """Deterministic, injective-ish score used to make rankings predictable."""

    spec: SegmentSpec

    def score(self, tokens):
        if len(tokens) != self.spec.length:
            raise ValueError("length mismatch")
        return 1.0 / (1.0 + np.exp(-0.01 * float(np.dot(tokens, np.arange(1, len(tokens) + 1)) % 997)))


def constant_bank(value=0.5):
    return DetectorBank(**{n: ConstantDetector(s, value) for n, s in BANK_SPECS.items()})


def oracle_bank(source):
    return DetectorBank(**{n: LikelihoodDetector(s, source) for n, s in BANK_SPECS.items()})


def token_sum_bank():
    return DetectorBank(**{n: TokenSumDetector(s) for n, s in BANK_SPECS.items()})


@pytest.fixture(scope="session")
def small_world():
    """A 32-token ring HMM, a real corpus from it and a bigram model fit to it."""
    source = banded_hmm(32, 8, seed=3)
    rng = np.random.default_rng(11)
    corpus = [hmm_sample(source, 120, rng) for _ in range(60)]
    model = ngram_train(corpus, 2, 1.0)
    return source, corpus, model


@pytest.fixture
def two_token_chain():
    return MarkovModel(np.array([[0.9, 0.1], [0.2, 0.8]]), np.array([0.5, 0.5]))


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``acceptance(number, title)`` returns a context manager; the
    line is FAIL if the body raises.
    """
    import time
    from contextlib import contextmanager

    @contextmanager
    def criterion(number, title):
        t0 = time.perf_counter()
        status, detail = "FAIL", ""
        try:
            yield
            status = "PASS"
        except AssertionError as exc:
            detail = str(exc).splitlines()[0] if str(exc) else "assertion failed"
            raise
        finally:
            elapsed = time.perf_counter() - t0
            line = f"criterion {number:2d} {status}  {title}  [{elapsed:.1f}s]"
            ACCEPTANCE_LINES[number] = line + (f"  {detail}" if detail else "")

    return criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
