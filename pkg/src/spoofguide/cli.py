"""Command-line workflows: data synthesis, training, evaluation, decoding, benchmarking.

Settings come from three layers, highest first: command-line flags, a JSON
config file (``--config``), built-in defaults. The config file holds one
object per section::

    {"eas": {"alpha": 0.2}, "hier": {"beams": [8, 5, 3]}, "train": {...},
     "ras": {...}, "benchmark": {...}, "run": {...}}

Every flag is the dashed form of a ``section.key`` pair listed in the
subcommand's ``--help``. Unknown sections or keys are rejected.

Exit codes: 0 success, 1 invalid input or usage, 2 a benchmark check failed,
3 file system error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .armodel import load_ngram, ngram_train, save_ngram
from .detector import TrainConfig, evaluate_bank, load_bank, save_bank, train_bank
from .harness import (
    HIER_SCHEMES,
    SCHEMES,
    BenchmarkConfig,
    check_orderings,
    decode,
    make_corpora,
    run_seeds,
    write_reports,
)
from .hierdecode import HierParams
from .sampling import EASParams, RASParams
from .tokens import TokenSequence, read_corpus, write_corpus

__all__ = ["CliConfig", "ConfigError", "build_parser", "load_config_file", "main", "resolve_config"]

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    """Bad config file content or an invalid combination of options."""


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors (exit 1); exit 2 is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


_BENCH_NESTED = {"train", "eas", "ras", "hier"}
_BENCH = BenchmarkConfig()
_HIER = HierParams()


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    n_sequences: int = 10
    length: int = 120
    hop: int = 0
    n_seeds: int = 5


DEFAULTS: dict[str, dict] = {
    "eas": asdict(EASParams()),
    "ras": asdict(RASParams()),
    "hier": {k: getattr(_HIER, k) for k in ("warmup_len", "stage_lens", "beams", "max_len", "rank_weights")},
    "train": asdict(_BENCH.train),
    "benchmark": {f.name: getattr(_BENCH, f.name) for f in fields(BenchmarkConfig) if f.name not in _BENCH_NESTED},
    "run": asdict(RunOptions()),
}

# flags that are not simply the dashed key name
_FLAG_OVERRIDES = {
    ("eas", "window"): "--memory-window",
    ("ras", "top_k"): "--ras-top-k",
    ("ras", "top_p"): "--ras-top-p",
    ("ras", "window"): "--ras-window",
    ("ras", "penalty"): "--ras-penalty",
    ("ras", "temperature"): "--ras-temperature",
    ("train", "seed"): "--train-seed",
    ("benchmark", "seed"): "--bench-seed",
}

_HELP = {
    ("eas", "alpha"): "penalty scale",
    ("eas", "beta"): "per-step decay of remembered penalties",
    ("eas", "gamma"): "cap on one token's total penalty",
    ("eas", "cluster_k"): "top candidates remembered per step",
    ("eas", "window"): "steps a remembered candidate stays in memory",
    ("eas", "top_p"): "nucleus threshold",
    ("eas", "top_k"): "top-k filter before penalties",
    ("eas", "temperature"): "softmax temperature",
    ("ras", "top_k"): "RAS-style sampler top-k",
    ("ras", "top_p"): "RAS-style sampler nucleus threshold",
    ("ras", "window"): "RAS-style window of recent tokens",
    ("ras", "penalty"): "RAS-style multiplicative penalty",
    ("ras", "temperature"): "RAS-style sampler temperature",
    ("hier", "warmup_len"): "tokens sampled before the first round",
    ("hier", "stage_lens"): "chunk length at each of the three stages",
    ("hier", "beams"): "beams alive at each stage",
    ("hier", "max_len"): "tokens generated by a hierarchical decode",
    ("hier", "rank_weights"): "final rank weights for the 50, 25<-50 and 10<-50 detectors",
    ("train", "learning_rate"): "gradient step size",
    ("train", "weight_decay"): "L2 decay on weights",
    ("train", "epochs"): "passes over the training segments",
    ("train", "batch_size"): "segments per gradient step",
    ("train", "seed"): "shuffling seed",
    ("run", "seed"): "root seed for decoding",
    ("run", "n_sequences"): "number of sequences to decode",
    ("run", "length"): "tokens per decoded sequence (non-hierarchical schemes)",
    ("run", "hop"): "crop hop for segments; 0 means non-overlapping",
    ("run", "n_seeds"): "benchmark seeds, starting at --bench-seed",
    ("benchmark", "decoders"): "comma-separated subset of " + ",".join(SCHEMES),
}


def _parser_for(value) -> Callable[[str], object]:
    if isinstance(value, bool):
        raise TypeError("boolean options are not supported")
    if isinstance(value, tuple):
        if all(isinstance(x, str) for x in value):
            return _names
        return _ints if all(isinstance(x, int) for x in value) else _floats
    return type(value)


def _show(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{x:.4g}" if isinstance(x, float) else str(x) for x in value)
    return str(value)


def _flag(section: str, key: str) -> str:
    return _FLAG_OVERRIDES.get((section, key), "--" + key.replace("_", "-"))


def _add_section(parser: argparse.ArgumentParser, section: str, keys: Sequence[str] | None = None) -> None:
    group = parser.add_argument_group(f"{section} settings (config section '{section}')")
    for key in keys if keys is not None else DEFAULTS[section]:
        default = DEFAULTS[section][key]
        text = _HELP.get((section, key), key.replace("_", " "))
        group.add_argument(
            _flag(section, key),
            dest=f"{section}.{key}",
            type=_parser_for(default),
            default=None,
            metavar=key.upper(),
            help=f"{text} (default: {_show(default)})",
        )


def load_config_file(path: str | None) -> dict[str, dict]:
    """Read and validate a JSON config; returns only the keys it sets."""
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object of sections")
    out = {}
    for section, values in doc.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{path}: unknown section {section!r}; expected one of {sorted(DEFAULTS)}")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        unknown = sorted(set(values) - set(DEFAULTS[section]))
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {unknown} in section {section!r}")
        out[section] = {
            k: tuple(v) if isinstance(DEFAULTS[section][k], tuple) else v for k, v in values.items()
        }
    return out


@dataclass(frozen=True)
class CliConfig:
    eas: EASParams
    ras: RASParams
    hier: HierParams
    train: TrainConfig
    benchmark: BenchmarkConfig
    run: RunOptions


def resolve_config(args: argparse.Namespace | None = None, file_values: dict | None = None) -> CliConfig:
    """Merge defaults, config-file values and flags (in increasing priority)."""
    merged = {s: dict(v) for s, v in DEFAULTS.items()}
    for section, values in (file_values or {}).items():
        merged[section].update(values)
    for dest, value in vars(args or argparse.Namespace()).items():
        if "." in dest and value is not None:
            section, key = dest.split(".", 1)
            merged[section][key] = value
    try:
        eas = EASParams(**merged["eas"])
        ras = RASParams(**merged["ras"])
        hier = HierParams(**merged["hier"], eas=eas)
        train = TrainConfig(**merged["train"])
        bench = BenchmarkConfig(**merged["benchmark"], train=train, eas=eas, ras=ras, hier=hier)
        run = RunOptions(**merged["run"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if run.n_sequences < 1 or run.length < 1 or run.n_seeds < 1 or run.hop < 0:
        raise ConfigError("n_sequences, length and n_seeds must be positive and hop non-negative")
    return CliConfig(eas, ras, hier, train, bench, run)


def _config(args) -> CliConfig:
    return resolve_config(args, load_config_file(args.config))


_WORLD_KEYS = (
    "vocab_size", "hmm_states", "hmm_seed", "hmm_stay", "hmm_forward", "hmm_backward",
    "hmm_concentration", "n_real", "seq_len", "fakes_per_real", "holdout_frac",
    "ar_order", "ar_lambda", "baseline_k", "baseline_temperature", "seed",
)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, real_train, real_heldout, fake_train, fake_heldout = make_corpora(cfg.benchmark)
    V = cfg.benchmark.vocab_size
    for name, corpus in (
        ("real_train", real_train), ("real_heldout", real_heldout),
        ("fake_train", fake_train), ("fake_heldout", fake_heldout),
    ):
        write_corpus(out / f"{name}.txt", corpus, V)
    save_ngram(model, out / "ar_model.json")
    print(f"wrote {len(real_train)}+{len(real_heldout)} real and "
          f"{len(fake_train)}+{len(fake_heldout)} fake sequences to {out}")
    return EXIT_OK


def cmd_train_ar(args) -> int:
    cfg = _config(args).benchmark
    corpus = read_corpus(args.corpus)
    vocab = corpus[0].vocab_size if corpus else cfg.vocab_size
    model = ngram_train(corpus, cfg.ar_order, cfg.ar_lambda, vocab)
    save_ngram(model, args.out)
    print(f"trained order-{cfg.ar_order} model on {len(corpus)} sequences -> {args.out}")
    return EXIT_OK


def cmd_train_detectors(args) -> int:
    cfg = _config(args)
    real, fake = read_corpus(args.real), read_corpus(args.fake)
    bank = train_bank(real, fake, cfg.train, cfg.benchmark.feature_dim, cfg.run.hop or None)
    save_bank(bank, args.out_dir)
    for name, det in bank.members().items():
        print(f"{name:<7} final training loss {det.loss_history[-1]:.4f}")
    return EXIT_OK


def format_detector_table(rows: Sequence[dict]) -> str:
    lines = [f"{'detector':<8} {'length':>6} {'stride':>6} {'AUROC':>7} {'Acc':>7} {'MacroF1':>8} {'n_real':>7} {'n_fake':>7}"]
    for r in rows:
        lines.append(
            f"{r['detector']:<8} {r['length']:>6} {r['stride']:>6} {r['auroc']:7.4f} "
            f"{r['accuracy']:7.4f} {r['macro_f1']:8.4f} {r['n_real']:>7} {r['n_fake']:>7}"
        )
    return "\n".join(lines)


def cmd_eval_detectors(args) -> int:
    cfg = _config(args)
    bank = load_bank(args.bank)
    rows = evaluate_bank(bank, read_corpus(args.real), read_corpus(args.fake), cfg.run.hop or None)
    print(format_detector_table(rows))
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _config(args)
    scheme = args.scheme
    if scheme in HIER_SCHEMES and args.bank is None:
        raise ConfigError(f"scheme {scheme!r} needs --bank")
    if scheme not in HIER_SCHEMES and args.bank is not None:
        raise ConfigError(f"scheme {scheme!r} does not take --bank")
    model = load_ngram(args.model)
    bank = load_bank(args.bank) if args.bank else None
    prompts = read_corpus(args.prompts) if args.prompts else []
    n_tokens = cfg.hier.max_len if scheme in HIER_SCHEMES else cfg.run.length
    rng = np.random.default_rng(cfg.run.seed)
    outputs, log_lines = [], []
    for i in range(cfg.run.n_sequences):
        prompt = list(prompts[i % len(prompts)].tokens) if prompts else []
        toks, logs = decode(
            scheme, model, prompt, n_tokens, rng,
            eas=cfg.eas, ras=cfg.ras, hier=cfg.hier, bank=bank,
            baseline_k=cfg.benchmark.baseline_k, temperature=cfg.benchmark.baseline_temperature,
        )
        outputs.append(TokenSequence(model.vocab_size, tuple(toks)))
        log_lines.extend(json.dumps({"sequence": i, **log.to_dict()}) for log in logs)
    write_corpus(args.out, outputs, model.vocab_size)
    if args.round_log:
        Path(args.round_log).write_text("".join(line + "\n" for line in log_lines), encoding="utf-8")
    print(f"decoded {len(outputs)} x {n_tokens} tokens with {scheme} -> {args.out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    base = cfg.benchmark
    seeds = [base.seed + i for i in range(cfg.run.n_seeds)]
    results = run_seeds(base, seeds)
    checks = check_orderings(results)
    write_reports(results, args.out_dir, checks)
    print((Path(args.out_dir) / "summary.txt").read_text(encoding="utf-8"), end="")
    if len(seeds) > 1 and not all(c["ok"] for c in checks.values()):
        print("benchmark checks failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


_DEFAULTS_EPILOG = (
    "defaults: alpha=0.2 beta=0.7 gamma=0.8 cluster_k=3 memory_window=15 top_p=0.8 "
    "top_k=50 temperature=1.0; warmup_len=20 stage_lens=10,25,50 beams=8,5,3 "
    "equal rank weights; RAS-style window=25 penalty=0.1. "
    "Schemes: original (top-k), ras (RAS-style windowed penalty), eas, hier-ras, hier-eas."
)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spoofguide",
        description="Detector-guided decoding of discrete token sequences.",
        epilog=_DEFAULTS_EPILOG,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=_DEFAULTS_EPILOG)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "synthesize real and fake corpora plus the n-gram model")
    p.add_argument("--out-dir", required=True)
    _add_section(p, "benchmark", _WORLD_KEYS)

    p = command("train-ar", cmd_train_ar, "train an n-gram model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_section(p, "benchmark", ("ar_order", "ar_lambda", "vocab_size"))

    p = command("train-detectors", cmd_train_detectors, "train the five-detector bank")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--out-dir", required=True)
    _add_section(p, "train")
    _add_section(p, "benchmark", ("feature_dim",))
    _add_section(p, "run", ("hop",))

    p = command("eval-detectors", cmd_eval_detectors, "print AUROC, accuracy and macro-F1 per detector")
    p.add_argument("--bank", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    _add_section(p, "run", ("hop",))

    p = command("decode", cmd_decode, "generate sequences with one decoding scheme")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", required=True, choices=SCHEMES,
                   help="original | ras (RAS-style windowed penalty) | eas | hier-ras | hier-eas")
    p.add_argument("--bank", help="detector bank directory (hierarchical schemes only)")
    p.add_argument("--prompts", help="corpus of prompts, used in turn")
    p.add_argument("--out", required=True)
    p.add_argument("--round-log", help="write per-round selection logs (JSON lines)")
    _add_section(p, "eas")
    _add_section(p, "ras")
    _add_section(p, "hier")
    _add_section(p, "benchmark", ("baseline_k", "baseline_temperature"))
    _add_section(p, "run", ("seed", "n_sequences", "length"))

    p = command("benchmark", cmd_benchmark, "run the synthetic benchmark over several seeds")
    p.add_argument("--out-dir", required=True)
    for section in ("benchmark", "train", "eas", "ras", "hier"):
        _add_section(p, section)
    _add_section(p, "run", ("n_seeds",))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"spoofguide: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"spoofguide: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
