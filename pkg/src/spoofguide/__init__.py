"""Detector-guided decoding for discrete token sequences.

Entropy-aware sampling, hierarchical candidate pruning with a bank of
multi-resolution segment detectors, and a synthetic benchmark that runs
without audio or GPUs.
"""

from .armodel import (
    HMMSource,
    MarkovModel,
    NGramModel,
    banded_hmm,
    hmm_sample,
    load_ngram,
    ngram_dist,
    ngram_train,
    save_ngram,
    sticky_markov_model,
)
from .detector import (
    DetectorBank,
    FeatureLogisticDetector,
    TrainConfig,
    accuracy_at,
    auroc,
    bce_train,
    build_training_set,
    evaluate_bank,
    featurize,
    load_bank,
    macro_f1_at,
    save_bank,
    score_segment,
    train_bank,
)
from .harness import (
    BenchmarkConfig,
    bigram_kl,
    check_orderings,
    repetition_stats,
    synth_benchmark,
)
from .hierdecode import HierParams, RoundLog, aggregate_ranks, hier_generate
from .sampling import (
    EASParams,
    EASState,
    RASParams,
    baseline_topk_generate,
    eas_generate,
    eas_penalties,
    eas_step,
    windowed_penalty_generate,
)
from .tokens import Segment, SegmentSpec, TokenSequence, read_corpus, write_corpus

__version__ = "0.1.0"
