import json
import subprocess
import sys

import pytest

from spoofguide import cli
from spoofguide.cli import build_parser, load_config_file, main, resolve_config


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def smoke_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("smoke")
    assert main(["gen-data", "--out-dir", str(d / "data"), "--vocab-size", "16", "--hmm-states", "4"]) == 0
    assert main(["train-detectors", "--real", str(d / "data/real_train.txt"), "--fake",
                 str(d / "data/fake_train.txt"), "--out-dir", str(d / "bank")]) == 0
    return d


def test_help_lists_default_values(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["decode", "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for fragment in ("penalty scale (default: 0.2)", "(default: 0.7)", "(default: 0.8)",
                     "top candidates remembered per step (default: 3)",
                     "steps a remembered candidate stays in memory (default: 15)",
                     "top-k filter before penalties (default: 50)", "softmax temperature (default: 1.0)",
                     "tokens sampled before the first round (default: 20)", "(default: 10,25,50)",
                     "(default: 8,5,3)", "RAS-style window of recent tokens (default: 25)",
                     "RAS-style multiplicative penalty (default: 0.1)", "RAS-style"):
        assert fragment in text, fragment


def test_top_level_help_mentions_schemes(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = " ".join(capsys.readouterr().out.split())
    assert "alpha=0.2 beta=0.7 gamma=0.8 cluster_k=3 memory_window=15" in out
    for cmd in ("gen-data", "train-ar", "train-detectors", "eval-detectors", "decode", "benchmark"):
        assert cmd in out


def test_precedence_flag_over_file_over_default(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eas": {"alpha": 0.5, "beta": 0.6}, "hier": {"beams": [6, 4, 2]}}))
    parser = build_parser()
    args = parser.parse_args(["decode", "--model", "m", "--scheme", "eas", "--out", "o",
                              "--config", str(cfg), "--alpha", "0.3"])
    conf = resolve_config(args, load_config_file(args.config))
    assert conf.eas.alpha == 0.3  # flag
    assert conf.eas.beta == 0.6  # file
    assert conf.eas.gamma == 0.8  # default
    assert conf.hier.beams == (6, 4, 2) and conf.hier.eas == conf.eas


def test_defaults_without_flags_or_file():
    conf = resolve_config()
    assert (conf.eas.alpha, conf.eas.beta, conf.eas.gamma, conf.eas.cluster_k, conf.eas.window) == (0.2, 0.7, 0.8, 3, 15)
    assert (conf.eas.top_p, conf.eas.top_k, conf.eas.temperature) == (0.8, 50, 1.0)
    assert conf.hier.warmup_len == 20 and conf.hier.stage_lens == (10, 25, 50) and conf.hier.beams == (8, 5, 3)
    assert (conf.ras.window, conf.ras.penalty) == (25, 0.1)


def test_every_config_key_has_a_flag():
    parser = build_parser()
    dests = set()
    for action in parser._subparsers._group_actions[0].choices.values():
        dests |= {a.dest for a in action._actions}
    for section, keys in cli.DEFAULTS.items():
        for key in keys:
            assert f"{section}.{key}" in dests, (section, key)


@pytest.mark.parametrize("doc, message", [
    ({"eas": {"alpah": 1}}, "unknown key"),
    ({"sampling": {}}, "unknown section"),
    ({"eas": 3}, "must be an object"),
])
def test_bad_config_rejected(tmp_path, capsys, doc, message):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    code, _, err = run(["decode", "--config", cfg, "--model", "m", "--scheme", "eas", "--out", "o"], capsys)
    assert code == 1 and message in err


def test_invalid_value_is_validation_error(smoke_dir, tmp_path, capsys):
    code, _, err = run(["decode", "--model", smoke_dir / "data/ar_model.json", "--scheme", "eas",
                        "--out", tmp_path / "o.txt", "--beta", "0"], capsys)
    assert code == 1 and "beta" in err


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["decode", "--scheme", "eas"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["decode", "--model", "m", "--scheme", "beam", "--out", "o"])
    assert exc.value.code == 1


def test_missing_file_exits_3(tmp_path, capsys):
    code, _, err = run(["decode", "--model", tmp_path / "none.json", "--scheme", "eas",
                        "--out", tmp_path / "o.txt"], capsys)
    assert code == 3 and "none.json" in err


def test_malformed_corpus_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("#vocab=4\n1 9\n")
    code, _, err = run(["train-ar", "--corpus", bad, "--out", tmp_path / "m.json"], capsys)
    assert code == 1 and ":2:" in err


def test_decode_is_deterministic(smoke_dir, tmp_path, capsys):
    model = smoke_dir / "data/ar_model.json"
    for name in ("a.txt", "b.txt"):
        code, _, _ = run(["decode", "--model", model, "--scheme", "eas", "--seed", 1,
                          "--out", tmp_path / name], capsys)
        assert code == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    code, _, _ = run(["decode", "--model", model, "--scheme", "eas", "--seed", 2,
                      "--out", tmp_path / "c.txt"], capsys)
    assert (tmp_path / "c.txt").read_bytes() != (tmp_path / "a.txt").read_bytes()


def test_hier_scheme_requires_bank(smoke_dir, tmp_path, capsys):
    model = smoke_dir / "data/ar_model.json"
    code, _, err = run(["decode", "--model", model, "--scheme", "hier-eas", "--out", tmp_path / "o.txt"], capsys)
    assert code == 1 and "--bank" in err
    code, _, err = run(["decode", "--model", model, "--scheme", "ras", "--bank", smoke_dir / "bank",
                        "--out", tmp_path / "o.txt"], capsys)
    assert code == 1 and "--bank" in err


def test_hier_decode_with_round_log(smoke_dir, tmp_path, capsys):
    code, _, _ = run(["decode", "--model", smoke_dir / "data/ar_model.json", "--scheme", "hier-eas",
                      "--bank", smoke_dir / "bank", "--prompts", smoke_dir / "data/real_heldout.txt",
                      "--n-sequences", 2, "--max-len", 70, "--out", tmp_path / "h.txt",
                      "--round-log", tmp_path / "r.jsonl"], capsys)
    assert code == 0
    lines = (tmp_path / "h.txt").read_text().splitlines()
    assert lines[0] == "#vocab=16" and [len(l.split()) for l in lines[1:]] == [70, 70]
    rounds = [json.loads(l) for l in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert [r["sequence"] for r in rounds] == [0, 1]


def test_eval_detectors_on_smoke_benchmark(smoke_dir, capsys):
    code, out, _ = run(["eval-detectors", "--bank", smoke_dir / "bank", "--real",
                        smoke_dir / "data/real_heldout.txt", "--fake", smoke_dir / "data/fake_heldout.txt"], capsys)
    assert code == 0
    rows = [line.split() for line in out.strip().splitlines()[1:]]
    assert [r[0] for r in rows] == ["m10", "m25", "m50", "m50_25", "m50_10"]
    auc = {r[0]: float(r[3]) for r in rows}
    assert auc["m10"] <= auc["m25"] <= auc["m50"]


def test_train_ar_round_trip(smoke_dir, tmp_path, capsys):
    from spoofguide.armodel import load_ngram
    code, _, _ = run(["train-ar", "--corpus", smoke_dir / "data/real_train.txt", "--ar-order", 3,
                      "--ar-lambda", 0.5, "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    m = load_ngram(tmp_path / "m.json")
    assert (m.order, m.lam, m.vocab_size) == (3, 0.5, 16)


def test_benchmark_writes_reports(tmp_path, capsys):
    args = ["benchmark", "--out-dir", tmp_path / "b", "--vocab-size", 16, "--hmm-states", 4,
            "--n-real", 60, "--n-eval", 2, "--decoders", "original,eas", "--n-seeds", 1]
    code, out, _ = run(args, capsys)
    assert code == 0 and "checks" in out
    for f in ("detectors.jsonl", "decoders.jsonl", "summary.txt", "timings.json"):
        assert (tmp_path / "b" / f).is_file()


def test_benchmark_failed_check_exits_2(tmp_path, capsys, monkeypatch):
    def failing(results, majority=None):
        return {"auroc_ordering": {"votes": [False, False], "passed": 0, "required": 2, "ok": False}}
    monkeypatch.setattr(cli, "check_orderings", failing)
    args = ["benchmark", "--out-dir", tmp_path / "b", "--vocab-size", 16, "--hmm-states", 4,
            "--n-real", 40, "--n-eval", 1, "--decoders", "original", "--n-seeds", 2]
    code, _, err = run(args, capsys)
    assert code == 2 and "failed" in err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "spoofguide.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "decode" in proc.stdout
