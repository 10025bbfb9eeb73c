"""Synthetic end-to-end benchmark at token scale.

Pipeline for one seed:

1. sample a "real" corpus from a banded HMM and hold part of it out;
2. train the n-gram stand-in on the training part;
3. generate ``fakes_per_real`` top-k samples per real sequence;
4. train the five-detector bank and evaluate it on held-out segments;
5. decode an evaluation corpus with each requested scheme and compare it
   to the held-out real corpus through token-space proxies (bigram KL,
   repetition statistics, mean detector scores).

Everything except wall-clock timings is a deterministic function of the
config, and timings are kept out of the report files.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .armodel import NGramModel, banded_hmm, hmm_sample, ngram_train
from .detector import (
    DetectorBank,
    TrainConfig,
    evaluate_bank,
    score_many,
    train_bank,
)
from .hierdecode import HierParams, hier_generate
from .sampling import (
    EASParams,
    RASParams,
    baseline_topk_generate,
    eas_generate,
    windowed_penalty_generate,
)
from .tokens import TokenSequence, crop_windows

__all__ = [
    "SCHEMES",
    "BenchmarkConfig",
    "BenchmarkResult",
    "DecoderReport",
    "bigram_kl",
    "check_orderings",
    "decode",
    "make_corpora",
    "repetition_stats",
    "run_seeds",
    "synth_benchmark",
    "write_reports",
]

logger = logging.getLogger(__name__)

SCHEMES = ("original", "ras", "eas", "hier-ras", "hier-eas")
HIER_SCHEMES = ("hier-ras", "hier-eas")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything that determines one benchmark run.

    The defaults describe a 128-token world whose hidden states mostly
    advance along a ring, each state emitting from a small token subset.
    The bigram stand-in with ``ar_lambda = 3`` spreads a large share of its
    mass onto transitions real data never makes, which is the gap the
    detectors learn and the decoders are judged on.
    """

    vocab_size: int = 128
    hmm_states: int = 16
    hmm_seed: int = 7
    hmm_stay: float = 0.1
    hmm_forward: float = 0.8
    hmm_backward: float = 0.0
    hmm_concentration: float = 0.03
    n_real: int = 200
    seq_len: int = 120
    fakes_per_real: int = 3
    holdout_frac: float = 0.25
    ar_order: int = 2
    ar_lambda: float = 3.0
    baseline_k: int = 50
    baseline_temperature: float = 1.0
    feature_dim: int = 4096
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(learning_rate=0.005, weight_decay=1e-4, epochs=60, batch_size=64)
    )
    eas: EASParams = field(default_factory=EASParams)
    ras: RASParams = field(default_factory=RASParams)
    hier: HierParams = field(default_factory=HierParams)
    decoders: tuple[str, ...] = SCHEMES
    n_eval: int = 60
    eval_len: int = 120
    prompt_len: int = 10
    kl_epsilon: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decoders", tuple(self.decoders))
        unknown = set(self.decoders) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown decoders {sorted(unknown)}; choose from {SCHEMES}")
        if self.fakes_per_real < 1 or self.n_real < 2:
            raise ValueError("need n_real >= 2 and fakes_per_real >= 1")
        if not 0 < self.holdout_frac < 1:
            raise ValueError("holdout_frac must be in (0, 1)")
        if self.eval_len < 1 or self.n_eval < 1:
            raise ValueError("eval_len and n_eval must be positive")
        if self.prompt_len > self.seq_len:
            raise ValueError("prompt_len cannot exceed seq_len")


@dataclass
class DecoderReport:
    decoder: str
    n_sequences: int
    length: int
    bigram_kl: float
    max_run_mean: float
    max_run_max: int
    mean_run: float
    distinct_1: float
    distinct_2: float
    bank_scores: dict[str, float]
    seconds_per_token: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("seconds_per_token")
        return d


@dataclass
class BenchmarkResult:
    seed: int
    detector_rows: list[dict]
    decoder_reports: list[DecoderReport]
    model: NGramModel = field(repr=False)
    bank: DetectorBank = field(repr=False)
    real_train: list[TokenSequence] = field(repr=False)
    real_heldout: list[TokenSequence] = field(repr=False)
    fake_train: list[TokenSequence] = field(repr=False)
    fake_heldout: list[TokenSequence] = field(repr=False)

    def auroc(self, name: str) -> float:
        return next(r["auroc"] for r in self.detector_rows if r["detector"] == name)

    def report(self, decoder: str) -> DecoderReport:
        return next(r for r in self.decoder_reports if r.decoder == decoder)


def _bigram_counts(corpus: Sequence, V: int) -> np.ndarray:
    counts = np.zeros((V, V))
    for seq in corpus:
        toks = np.asarray(seq.tokens if isinstance(seq, TokenSequence) else seq, dtype=np.int64)
        if toks.size > 1:
            np.add.at(counts, (toks[:-1], toks[1:]), 1.0)
    return counts


def bigram_kl(
    candidate: Sequence,
    reference: Sequence,
    vocab_size: int,
    epsilon: float = 0.5,
) -> float:
    """KL(reference || candidate) between smoothed bigram distributions, in nats.

    Each of the ``V*V`` bigram cells gets ``epsilon`` added to its count in
    both corpora before normalization. Bigrams never span two sequences.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not len(candidate) or not len(reference):
        raise ValueError("both corpora must be non-empty")
    p = _bigram_counts(reference, vocab_size) + epsilon
    q = _bigram_counts(candidate, vocab_size) + epsilon
    p /= p.sum()
    q /= q.sum()
    return float(max(0.0, np.sum(p * (np.log(p) - np.log(q)))))


def repetition_stats(seq: Sequence[int]) -> dict:
    """Run-length and distinct-n statistics of one sequence."""
    toks = list(seq.tokens if isinstance(seq, TokenSequence) else seq)
    if not toks:
        raise ValueError("repetition_stats needs a non-empty sequence")
    runs = []
    run = 1
    for a, b in zip(toks, toks[1:]):
        if a == b:
            run += 1
        else:
            runs.append(run)
            run = 1
    runs.append(run)
    bigrams = list(zip(toks, toks[1:]))
    return {
        "max_run": max(runs),
        "mean_run": sum(runs) / len(runs),
        "distinct_1": len(set(toks)) / len(toks),
        "distinct_2": len(set(bigrams)) / len(bigrams) if bigrams else 0.0,
    }


def decode(
    scheme: str,
    model,
    prefix: Sequence[int],
    n_tokens: int,
    rng: np.random.Generator,
    *,
    eas: EASParams = EASParams(),
    ras: RASParams = RASParams(),
    hier: HierParams = HierParams(),
    bank: DetectorBank | None = None,
    baseline_k: int = 50,
    temperature: float = 1.0,
):
    """Generate ``n_tokens`` after ``prefix`` with one of :data:`SCHEMES`.

    Returns ``(tokens, round_logs)``; the logs are empty for the
    non-hierarchical schemes. Hierarchical schemes need ``bank``; the others
    refuse one.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme in HIER_SCHEMES and bank is None:
        raise ValueError(f"scheme {scheme!r} needs a detector bank")
    if scheme not in HIER_SCHEMES and bank is not None:
        raise ValueError(f"scheme {scheme!r} does not use a detector bank")
    if scheme == "original":
        return baseline_topk_generate(model, prefix, n_tokens, baseline_k, temperature, rng), []
    if scheme == "ras":
        toks = windowed_penalty_generate(
            model, prefix, n_tokens, ras.top_k, ras.top_p, ras.window, ras.penalty, rng, ras.temperature
        )
        return toks, []
    if scheme == "eas":
        return eas_generate(model, prefix, n_tokens, eas, rng)[0], []
    hp = replace(hier, eas=eas, ras=ras if scheme == "hier-ras" else None,
                 max_len=n_tokens, warmup_len=min(hier.warmup_len, n_tokens))
    out, logs = hier_generate(model, bank, prefix, hp, rng)
    return list(out.tokens), logs


def make_corpora(cfg: BenchmarkConfig):
    """Real/fake train and held-out corpora plus the trained n-gram model."""
    V = cfg.vocab_size
    source = banded_hmm(
        V, cfg.hmm_states, cfg.hmm_seed,
        stay=cfg.hmm_stay, forward=cfg.hmm_forward, backward=cfg.hmm_backward,
        emission_concentration=cfg.hmm_concentration,
    )
    rng = np.random.default_rng([cfg.seed, 0])
    real = [hmm_sample(source, cfg.seq_len, rng) for _ in range(cfg.n_real)]
    n_hold = max(1, int(round(cfg.holdout_frac * cfg.n_real)))
    real_train, real_heldout = real[n_hold:], real[:n_hold]
    model = ngram_train(real_train, cfg.ar_order, cfg.ar_lambda, V)
    fake_rng = np.random.default_rng([cfg.seed, 1])

    def fakes(corpus):
        return [
            TokenSequence(V, tuple(baseline_topk_generate(
                model, [], len(s), cfg.baseline_k, cfg.baseline_temperature, fake_rng)))
            for s in corpus
            for _ in range(cfg.fakes_per_real)
        ]

    return model, real_train, real_heldout, fakes(real_train), fakes(real_heldout)


def _bank_means(bank: DetectorBank, corpus: Sequence[TokenSequence]) -> dict[str, float]:
    out = {}
    for name, det in bank.members().items():
        segs = [s for seq in corpus for s in crop_windows(seq, det.spec)]
        out[name] = float(np.mean(score_many(det, segs))) if segs else float("nan")
    return out


def synth_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    V = cfg.vocab_size
    model, real_train, real_heldout, fake_train, fake_heldout = make_corpora(cfg)
    train_cfg = replace(cfg.train, seed=cfg.train.seed + 1000 * cfg.seed)
    try:
        bank = train_bank(real_train, fake_train, train_cfg, cfg.feature_dim)
        rows = evaluate_bank(bank, real_heldout, fake_heldout)
    except ValueError as exc:
        raise ValueError(f"insufficient data: {exc}") from exc

    reports = []
    for d_index, scheme in enumerate(cfg.decoders):
        rng = np.random.default_rng([cfg.seed, 2, d_index])
        outputs = []
        t0 = time.perf_counter()
        for i in range(cfg.n_eval):
            prompt = list(real_heldout[i % len(real_heldout)].tokens[: cfg.prompt_len])
            toks, _ = decode(
                scheme, model, prompt, cfg.eval_len, rng,
                eas=cfg.eas, ras=cfg.ras, hier=cfg.hier,
                bank=bank if scheme in HIER_SCHEMES else None,
                baseline_k=cfg.baseline_k, temperature=cfg.baseline_temperature,
            )
            outputs.append(TokenSequence(V, tuple(toks)))
        elapsed = time.perf_counter() - t0
        stats = [repetition_stats(s) for s in outputs]
        reports.append(
            DecoderReport(
                decoder=scheme,
                n_sequences=len(outputs),
                length=cfg.eval_len,
                bigram_kl=bigram_kl(outputs, real_heldout, V, cfg.kl_epsilon),
                max_run_mean=float(np.mean([s["max_run"] for s in stats])),
                max_run_max=int(max(s["max_run"] for s in stats)),
                mean_run=float(np.mean([s["mean_run"] for s in stats])),
                distinct_1=float(np.mean([s["distinct_1"] for s in stats])),
                distinct_2=float(np.mean([s["distinct_2"] for s in stats])),
                bank_scores=_bank_means(bank, outputs),
                seconds_per_token=elapsed / (cfg.n_eval * cfg.eval_len),
            )
        )
        logger.info("decoder %s: bigram KL %.4f", scheme, reports[-1].bigram_kl)
    return BenchmarkResult(
        cfg.seed, rows, reports, model, bank, real_train, real_heldout, fake_train, fake_heldout
    )


def check_orderings(results: Sequence[BenchmarkResult], majority: int | None = None) -> dict[str, dict]:
    """Majority-vote checks over several seeds.

    * ``auroc_ordering``: held-out AUROC of m10 <= m25 <= m50;
    * ``auroc_above_null``: every detector's AUROC exceeds 0.5 plus three
      null standard deviations;
    * ``hier_kl``: hier-eas bigram KL <= original bigram KL (only when both
      decoders were run).

    A check passes when at least ``majority`` seeds satisfy it; the default
    allows one failure per five seeds (4 of 5).
    """
    n = len(results)
    majority = n - n // 5 if majority is None else majority
    votes: dict[str, list[bool]] = {"auroc_ordering": [], "auroc_above_null": []}
    for res in results:
        a = {r["detector"]: r["auroc"] for r in res.detector_rows}
        votes["auroc_ordering"].append(a["m10"] <= a["m25"] <= a["m50"])
        votes["auroc_above_null"].append(
            all(r["auroc"] > 0.5 + 3 * r["null_std"] for r in res.detector_rows)
        )
        names = {r.decoder for r in res.decoder_reports}
        if {"hier-eas", "original"} <= names:
            votes.setdefault("hier_kl", []).append(
                res.report("hier-eas").bigram_kl <= res.report("original").bigram_kl
            )
    return {
        k: {"votes": v, "passed": sum(v), "required": majority, "ok": sum(v) >= majority}
        for k, v in votes.items()
    }


def run_seeds(cfg: BenchmarkConfig, seeds: Sequence[int]) -> list[BenchmarkResult]:
    return [synth_benchmark(replace(cfg, seed=s)) for s in seeds]


def _summary_table(results: Sequence[BenchmarkResult], checks: dict) -> str:
    lines = []
    for res in results:
        lines.append(f"seed {res.seed}")
        lines.append(f"  {'detector':<8} {'res':>6} {'AUROC':>7} {'Acc':>7} {'MacroF1':>8}")
        for r in res.detector_rows:
            res_label = str(r["length"]) if r["stride"] == 1 else f"{r['length'] * r['stride']}->{r['length']}"
            lines.append(
                f"  {r['detector']:<8} {res_label:>6} {r['auroc']:7.4f} {r['accuracy']:7.4f} {r['macro_f1']:8.4f}"
            )
        if res.decoder_reports:
            lines.append(f"  {'decoder':<9} {'bigramKL':>9} {'maxrun':>7} {'dist2':>6} {'m50':>6}")
            for d in res.decoder_reports:
                lines.append(
                    f"  {d.decoder:<9} {d.bigram_kl:9.4f} {d.max_run_mean:7.2f} "
                    f"{d.distinct_2:6.3f} {d.bank_scores['m50']:6.3f}"
                )
    lines.append("checks")
    for k, v in checks.items():
        lines.append(f"  {k:<17} {v['passed']}/{len(v['votes'])} (need {v['required']}) {'PASS' if v['ok'] else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_reports(results: Sequence[BenchmarkResult], out_dir: str | os.PathLike, checks: dict | None = None) -> None:
    """Write ``detectors.jsonl``, ``decoders.jsonl``, ``summary.txt`` and ``timings.json``.

    The first three are byte-identical across runs of the same config;
    timings are not.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = check_orderings(results) if checks is None else checks
    with open(out / "detectors.jsonl", "w", encoding="utf-8") as fh:
        for res in results:
            for row in res.detector_rows:
                fh.write(json.dumps({"seed": res.seed, **row}, sort_keys=True) + "\n")
    with open(out / "decoders.jsonl", "w", encoding="utf-8") as fh:
        for res in results:
            for rep in res.decoder_reports:
                fh.write(json.dumps({"seed": res.seed, **rep.to_dict()}, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(_summary_table(results, checks), encoding="utf-8")
    timings = {
        str(res.seed): {d.decoder: d.seconds_per_token for d in res.decoder_reports}
        for res in results
    }
    (out / "timings.json").write_text(json.dumps(timings, indent=1) + "\n", encoding="utf-8")
