"""Acceptance criteria, one test each, at their stated tolerances and time limits.

A summary line per criterion is printed at the end of the pytest run.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from spoofguide.armodel import banded_hmm, hmm_sample, load_ngram, ngram_train, save_ngram, sticky_markov_model
from spoofguide.detector import (
    BANK_SPECS,
    TrainConfig,
    accuracy_at,
    auroc,
    bce_train,
    build_training_set,
    load_bank,
    macro_f1_at,
    save_bank,
    train_bank,
)
from spoofguide.harness import (
    SCHEMES,
    BenchmarkConfig,
    check_orderings,
    decode,
    make_corpora,
    repetition_stats,
    run_seeds,
    write_reports,
)
from spoofguide.hierdecode import HierParams, aggregate_ranks, hier_generate
from spoofguide.sampling import (
    EASParams,
    EASState,
    MemoryEntry,
    baseline_topk_generate,
    eas_generate,
    eas_penalties,
    eas_step,
    nucleus_sample,
    topk_nucleus_generate,
)
from spoofguide.tokens import TokenSequence, read_corpus, write_corpus

from conftest import oracle_bank, token_sum_bank

pytestmark = pytest.mark.acceptance

SEEDS = range(5)


def within(limit, t0):
    elapsed = time.perf_counter() - t0
    assert elapsed < limit, f"took {elapsed:.1f}s, limit {limit}s"


def direct_penalty(entries, token, alpha, beta, gamma):
    total = 0.0
    for i, r, a in entries:
        if i == token:
            total += alpha * (1.0 / (1 + r)) * beta**a
    return min(gamma, total)


def test_criterion_01_penalty_formula(acceptance):
    with acceptance(1, "penalty formula exact to 1e-12"):
        t0 = time.perf_counter()
        p = EASParams()
        cases = [
            ([(5, 1, 2)], 5, 0.049),
            ([(5, 1, 0), (5, 2, 1)], 5, 0.2 * 0.5 + 0.2 / 3 * 0.7),
            ([(5, 1, 0)] * 30, 5, 0.8),
        ]
        for entries, tok, expected in cases:
            got = eas_penalties(EASState(tuple(MemoryEntry(*e) for e in entries)), p, 8)[tok]
            assert abs(got - expected) < 1e-12, (entries, got, expected)
        assert round(cases[1][2], 4) == 0.1467
        rng = np.random.default_rng(0)
        for _ in range(200):
            params = EASParams(alpha=float(rng.uniform(0, 1)), beta=float(rng.uniform(0.1, 1)),
                               gamma=float(rng.uniform(0, 1)))
            entries = [(int(rng.integers(0, 6)), int(rng.integers(1, 5)), int(rng.integers(0, 16)))
                       for _ in range(int(rng.integers(1, 40)))]
            pen = eas_penalties(EASState(tuple(MemoryEntry(*e) for e in entries)), params, 6)
            for tok, value in pen.items():
                ref = direct_penalty(entries, tok, params.alpha, params.beta, params.gamma)
                assert abs(value - ref) < 1e-12
        within(1, t0)


def test_criterion_02_memory_discipline(acceptance, small_world):
    with acceptance(2, "memory ages <= 15 and size <= 64 over 10,000 steps"):
        t0 = time.perf_counter()
        model = small_world[2]
        params = EASParams()
        bound = (params.cluster_k + 1) * (params.window + 1)
        assert bound == 64
        rng = np.random.default_rng(0)
        state, ctx = EASState(), [0]
        for _ in range(10_000):
            tok, state = eas_step(model, ctx[-1:], state, params, rng)
            ctx.append(tok)
            assert max(e.age for e in state.entries) <= 15
            assert len(state) <= bound
        within(10, t0)


def test_criterion_03_nucleus_sampling(acceptance):
    with acceptance(3, "nucleus sampling frequencies within TV 0.02"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(1)
        frozen = [np.array([0.5, 0.3, 0.15, 0.05]), rng.dirichlet(np.ones(10))]
        for p in frozen:
            v = 0.8
            order = np.argsort(-p, kind="stable")
            cum = np.cumsum(p[order])
            n_keep = int(np.argmax(cum >= v - 1e-12)) + 1
            expected = np.zeros_like(p)
            expected[order[:n_keep]] = p[order[:n_keep]] / cum[n_keep - 1]
            draws = np.array([nucleus_sample(p, v, rng) for _ in range(100_000)])
            freq = np.bincount(draws, minlength=p.size) / draws.size
            tv = 0.5 * np.abs(freq - expected).sum()
            assert tv < 0.02, tv
            if p.size == 4:
                np.testing.assert_allclose(freq[:2], [0.625, 0.375], atol=0.02)
                assert freq[2:].sum() == 0
        within(5, t0)


def test_criterion_04_zero_alpha_equivalence(acceptance, small_world):
    with acceptance(4, "alpha=0 matches top-k + top-p over 100 trials"):
        t0 = time.perf_counter()
        model = small_world[2]
        params = EASParams(alpha=0.0)
        for trial in range(100):
            prefix = [trial % 32]
            a, _ = eas_generate(model, prefix, 40, params, np.random.default_rng(trial))
            b = topk_nucleus_generate(model, prefix, 40, params.top_k, params.top_p, params.temperature,
                                      np.random.default_rng(trial))
            assert a == b, trial
        within(10, t0)


def test_criterion_05_repetition_suppression(acceptance):
    with acceptance(5, "EAS mean max_run < top-k on a loop-prone 2-state chain (>= 4/5 seeds)"):
        t0 = time.perf_counter()
        model = sticky_markov_model()
        assert model.vocab_size == 2
        wins, summary = 0, []
        for seed in SEEDS:
            rng_e, rng_b = np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])
            eas = np.mean([repetition_stats(eas_generate(model, [], 100, EASParams(), rng_e)[0])["max_run"]
                           for _ in range(200)])
            base = np.mean([repetition_stats(baseline_topk_generate(model, [], 100, 50, 1.0, rng_b))["max_run"]
                            for _ in range(200)])
            wins += eas < base
            summary.append(f"{eas:.1f}/{base:.1f}")
        within(30, t0)
        assert wins >= 4, f"EAS/top-k mean max_run per seed: {', '.join(summary)}"


def test_criterion_06_detector_resolution_ordering(acceptance):
    with acceptance(6, "held-out AUROC m10 <= m25 <= m50 (>= 4/5 seeds), all above null + 3 sd"):
        t0 = time.perf_counter()
        results = run_seeds(BenchmarkConfig(decoders=()), SEEDS)
        checks = check_orderings(results)
        table = [{r["detector"]: round(r["auroc"], 3) for r in res.detector_rows} for res in results]
        assert checks["auroc_ordering"]["ok"], table
        for res in results:
            for row in res.detector_rows:
                assert row["auroc"] > 0.5 + 3 * row["null_std"], (res.seed, row)
        within(120, t0)


def test_criterion_07_metric_oracles(acceptance):
    with acceptance(7, "AUROC, accuracy and macro-F1 match brute-force oracles"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        for _ in range(200):
            P, N = int(rng.integers(1, 25)), int(rng.integers(1, 25))
            pos = rng.integers(0, 10, size=P) / 9.0
            neg = rng.integers(0, 10, size=N) / 9.0
            brute = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg) / (P * N)
            got = auroc(np.concatenate([pos, neg]), np.r_[np.ones(P), np.zeros(N)])
            assert abs(got - brute) < 1e-12
        for _ in range(50):
            tp, fn, fp, tn = (int(x) for x in rng.integers(0, 8, size=4))
            if tp + fn == 0 or fp + tn == 0:
                tp, tn = tp + 1, tn + 1
            scores = [0.9] * tp + [0.1] * fn + [0.7] * fp + [0.2] * tn
            labels = [1] * (tp + fn) + [0] * (fp + tn)
            f1_pos = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
            f1_neg = 2 * tn / (2 * tn + fn + fp) if 2 * tn + fn + fp else 0.0
            assert abs(macro_f1_at(scores, labels) - (f1_pos + f1_neg) / 2) < 1e-12
            assert abs(accuracy_at(scores, labels) - (tp + tn) / len(labels)) < 1e-12
        within(5, t0)


def test_criterion_08_rank_aggregation(acceptance):
    with acceptance(8, "rank aggregation winner equals exhaustive evaluation"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(8)
        for trial in range(1000):
            n = int(rng.integers(1, 9))
            # coarse grid forces plenty of ties
            s = [rng.integers(0, 4, size=n) / 3.0 for _ in range(3)]
            w = rng.dirichlet(np.ones(3)) if trial % 2 else np.full(3, 1 / 3)
            agg = aggregate_ranks(*s, weights=w)

            def rank(x, i):
                above = sum(x[j] > x[i] for j in range(n))
                tied = sum(x[j] == x[i] for j in range(n))
                return above + (tied + 1) / 2.0

            R = [sum(w[k] * rank(s[k], i) for k in range(3)) for i in range(n)]
            best = min(R)
            cands = [i for i in range(n) if abs(R[i] - best) <= 1e-9 * max(1.0, best)]
            top = max(s[0][i] for i in cands)
            expected = min(i for i in cands if s[0][i] == top)
            assert agg.best == expected, (s, w)
            np.testing.assert_allclose(agg.R, R, rtol=0, atol=1e-12)
            moved = aggregate_ranks(*(np.exp(5 * x) - 2 for x in s), weights=w)
            assert moved.best == agg.best
            assert np.array_equal(moved.R, agg.R)
            for a, b in ((agg.r50, moved.r50), (agg.r25, moved.r25), (agg.r10, moved.r10)):
                assert np.array_equal(a, b)
        within(5, t0)


def test_criterion_09_selection_improves_score(acceptance):
    with acceptance(9, "winner's stage-1 score >= median spawned score in every round; beams 8 -> 5 -> 3"):
        t0 = time.perf_counter()
        cfg = BenchmarkConfig()
        source = banded_hmm(cfg.vocab_size, cfg.hmm_states, cfg.hmm_seed, stay=cfg.hmm_stay,
                            forward=cfg.hmm_forward, backward=cfg.hmm_backward,
                            emission_concentration=cfg.hmm_concentration)
        rng = np.random.default_rng(0)
        corpus = [hmm_sample(source, cfg.seq_len, rng) for _ in range(150)]
        model = ngram_train(corpus, cfg.ar_order, cfg.ar_lambda)
        bank = oracle_bank(source)
        hp = HierParams(max_len=220)
        rounds, below = 0, []
        for seed in range(10):
            _, logs = hier_generate(model, bank, [], hp, np.random.default_rng(seed))
            assert len(logs) == 4
            for log in logs:
                assert log.beam_counts == (8, 5, 3)
                assert len(log.stage1_scores) == 8 and len(log.stage1_kept) == 5
                assert len(log.stage2_scores) == 5 and len(log.stage2_kept) == 3
                assert log.final_streams == log.stage2_kept
                rounds += 1
                winner = log.stage1_scores[log.chosen_stream]
                if winner < np.median(log.stage1_scores):
                    below.append((seed, log.round_index))
        within(60, t0)
        assert not below, f"{len(below)}/{rounds} rounds picked a chunk below the stage-1 median"


def test_criterion_10_drift_reduction(acceptance):
    with acceptance(10, "hier-eas bigram KL <= original bigram KL (>= 4/5 seeds)"):
        t0 = time.perf_counter()
        results = run_seeds(BenchmarkConfig(decoders=("original", "hier-eas")), SEEDS)
        checks = check_orderings(results)
        kls = [(round(r.report("hier-eas").bigram_kl, 4), round(r.report("original").bigram_kl, 4))
               for r in results]
        assert checks["hier_kl"]["ok"], kls
        within(180, t0)


def test_criterion_11_determinism_and_round_trips(acceptance, tmp_path, small_world):
    with acceptance(11, "fixed seeds give identical outputs; serialization round-trips"):
        t0 = time.perf_counter()
        _, corpus, model = small_world
        bank = token_sum_bank()
        for scheme in SCHEMES:
            b = bank if scheme.startswith("hier") else None
            outs = []
            for _ in range(2):
                toks, logs = decode(scheme, model, [3], 120, np.random.default_rng(5), bank=b)
                path = tmp_path / f"{scheme}-{len(outs)}.txt"
                write_corpus(path, [TokenSequence(32, tuple(toks))])
                outs.append((path.read_bytes(), [l.to_dict() for l in logs]))
            assert outs[0] == outs[1], scheme

        cfg = replace(BenchmarkConfig(vocab_size=16, hmm_states=4), n_real=80, n_eval=4,
                      decoders=("original", "eas", "hier-eas"))
        for name in ("a", "b"):
            write_reports(run_seeds(cfg, [0]), tmp_path / name)
        for f in ("detectors.jsonl", "decoders.jsonl", "summary.txt"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f

        seqs = corpus[:5] + [TokenSequence(32, ())]
        write_corpus(tmp_path / "c.txt", seqs)
        assert read_corpus(tmp_path / "c.txt") == seqs
        save_ngram(model, tmp_path / "m.json")
        assert load_ngram(tmp_path / "m.json") == model
        _, real, _, fake, _ = make_corpora(replace(cfg, n_real=20))
        trained = train_bank(real, fake, TrainConfig(learning_rate=0.005, epochs=3), feature_dim=256)
        save_bank(trained, tmp_path / "bank")
        loaded = load_bank(tmp_path / "bank")
        for name in BANK_SPECS:
            assert getattr(loaded, name) == getattr(trained, name)
        within(30, t0)
