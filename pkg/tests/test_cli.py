import hashlib
import json
import os

import pytest

from adaptr import cli
from adaptr.corpus import ParallelPair, write_pairs
from adaptr.lexicon import TermLexicon, write_lexicon

from conftest import TOY_CONFIG


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.mark.parametrize("command", ["simulate", "align", "build-lexicon", "train-corrector",
                                     "correct", "train-diarizer", "evaluate", "report", "pipeline"])
def test_help_documents_defaults(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "usage: adaptr " + command in text
    if command in ("simulate", "train-corrector", "build-lexicon", "pipeline"):
        assert "default" in text


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])
    assert exc.value.code == 2


def test_error_exit_codes(tmp_path, capsys):
    missing = str(tmp_path / "nope.jsonl")
    assert cli.main(["build-lexicon", "--ontology", missing, "--pairs", missing,
                     "--out", str(tmp_path / "l")]) == cli.EXIT_MISSING
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad_cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    conflict = tmp_path / "conflict.json"
    conflict.write_text(json.dumps({"channels": {"g": {"substitution_rate": 0.7,
                                                        "deletion_rate": 0.7}}}))
    assert cli.main(["simulate", "--config", str(conflict), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    bad_pairs = tmp_path / "bad.jsonl"
    bad_pairs.write_text('{"conv_id": "c", "utt_id": "u"}\n')
    assert cli.main(["correct", "--model", "identity", "--input", str(bad_pairs),
                     "--out", str(tmp_path / "o.jsonl")]) == cli.EXIT_DATA
    assert cli.main(["correct", "--model", str(tmp_path), "--input", str(bad_pairs),
                     "--out", str(tmp_path / "o.jsonl")]) == cli.EXIT_MISSING
    assert "error" in capsys.readouterr().err


def test_evaluate_identity_gives_zero_wer(tmp_path):
    pairs = [ParallelPair("c", f"u{i}", ["take", "coumadin", str(i)], ["take", "coumadin", str(i)],
                          "Doctor") for i in range(4)]
    write_pairs(pairs, tmp_path / "p.jsonl")
    write_lexicon(TermLexicon((("coumadin", 4),), 200), tmp_path / "lex.jsonl")
    out = tmp_path / "r.json"
    assert cli.main(["evaluate", "--pairs", str(tmp_path / "p.jsonl"), "--name", "x/raw",
                     "--lexicon", str(tmp_path / "lex.jsonl"), "--out", str(out)]) == 0
    rep = read_json(out)["report"]
    assert rep["wer"] == 0.0 and rep["bleu"] == 1.0 and rep["term"]["f1"] == 1.0
    md = tmp_path / "r.md"
    assert cli.main(["report", "--reports", str(out), "--out", str(md)]) == 0
    assert "| x | ASR output | 0.0 | 100.0 |" in md.read_text()


def test_toy_pipeline(toy_run):
    raw = read_json(os.path.join(toy_run, "eval", "google", "raw.json"))["report"]
    s2s = read_json(os.path.join(toy_run, "eval", "google", "s2s.json"))["report"]
    conf = read_json(os.path.join(toy_run, "eval", "google", "confusion.json"))["report"]
    assert s2s["wer"] < raw["wer"] and conf["wer"] < raw["wer"]
    md = open(os.path.join(toy_run, "report.md")).read()
    for heading in ("Transcript quality", "Domain-term", "Speaker-role", "Most and least"):
        assert heading in md
    for sub in ("data", "splits"):
        cfg = read_json(os.path.join(toy_run, sub, "run_config.json"))
        assert cfg["config"]["seed"] == 0
    side = read_json(os.path.join(toy_run, "models", "google", "s2s", "model.json"))
    assert side["meta"]["config"]["corrector"]["batch_size"] == 8
    assert os.path.exists(os.path.join(toy_run, "lexicon.jsonl.config.json"))


def test_commands_do_not_mutate_inputs(toy_run, tmp_path):
    test_split = os.path.join(toy_run, "splits", "google", "test.jsonl")
    before = digest(test_split), digest(TOY_CONFIG)
    model = os.path.join(toy_run, "models", "google", "confusion")
    for _ in range(2):
        assert cli.main(["correct", "--model", model, "--input", test_split,
                         "--out", str(tmp_path / "c.jsonl")]) == 0
    assert (digest(test_split), digest(TOY_CONFIG)) == before
    first = digest(tmp_path / "c.jsonl")
    assert cli.main(["correct", "--model", model, "--input", test_split,
                     "--out", str(tmp_path / "c.jsonl")]) == 0
    assert digest(tmp_path / "c.jsonl") == first
