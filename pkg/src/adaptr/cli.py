"""``adaptr`` command line: simulate, align, build lexicons, train, correct, evaluate, report.

Stages talk only through files. Every command writes its resolved
configuration next to its outputs (``<output>.config.json`` for single
files, ``run_config.json`` inside output directories).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys

from . import corpus as cp
from . import simulator as sim
from .corrector import (
    ConfusionTableCorrector, IdentityCorrector, Seq2SeqCorrector, TrainingDivergedError,
    correct_corpus, load_corrector,
)
from .diarizer import SpeakerRoleClassifier, evaluate_diarizer, make_windows, write_predictions
from .lexicon import build_term_lexicon, load_ontology, read_lexicon, write_lexicon
from .metrics import EvalReport, evaluate_pairs
from .nn.checkpoint import CheckpointError
from .report import render_markdown

log = logging.getLogger("adaptr")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DATA = 3
EXIT_MISSING = 4
EXIT_CONFIG = 5
EXIT_DIVERGED = 6


class CLIError(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


DEFAULTS = {
    "seed": 0,
    "split": {"train_fraction": 0.8, "valid_fraction": 0.1, "test_fraction": 0.1,
              "by": "utterance", "drop_empty": False},
    "lexicon": {"k": 200, "split": "test"},
    "corrector": {"learning_rate": 3e-3, "max_epochs": 25, "patience": 4},
    "confusion": {"min_count": 2, "threshold": 0.5},
    "diarizer": {"window": 32},
}


def resolved_config(path=None, seed=None):
    """Defaults, then the simulation defaults, then the user file, then ``--seed``."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(sim.default_config(cfg["seed"]))
    if path:
        if not os.path.exists(path):
            raise CLIError(f"config file not found: {path}", EXIT_MISSING)
        try:
            user = sim.load_config(path)
        except json.JSONDecodeError as exc:
            raise CLIError(f"{path}: invalid JSON ({exc.msg})", EXIT_CONFIG) from None
        _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
        cfg["dialogue"]["seed"] = seed
        for i, ch in enumerate(cfg["channels"].values(), 1):
            ch["seed"] = seed + i
    return cfg


def _merge(base, override):
    for k, v in override.items():
        if k == "channels":
            base[k] = v
        elif isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def _dump_json(obj, path):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _need(path):
    if not os.path.exists(path):
        raise CLIError(f"file not found: {path}", EXIT_MISSING)
    return path


def _provenance(args, cfg, command):
    return {"command": command, "config": cfg,
            "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"}}


# -- commands -----------------------------------------------------------------

def cmd_simulate(args):
    cfg = resolved_config(args.config, args.seed)
    paths = sim.simulate(cfg, args.out)
    _dump_json(_provenance(args, cfg, "simulate"), os.path.join(args.out, "run_config.json"))
    for name, path in paths.items():
        print(f"{name}: {path}")


def _parse_named(items):
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = os.path.splitext(os.path.basename(item))[0].replace("asr_", ""), item
        out[name] = path
    return out


def cmd_align(args):
    cfg = resolved_config(args.config, args.seed)
    s = cfg["split"]
    if args.fractions:
        s["train_fraction"], s["valid_fraction"], s["test_fraction"] = args.fractions
    if args.split_by:
        s["by"] = args.split_by
    if args.drop_empty:
        s["drop_empty"] = True
    reference = cp.ingest_reference(_need(args.reference))
    variants = _parse_named(args.asr)
    if "reference" in variants:
        raise CLIError("'reference' is reserved for the reference transcript", EXIT_CONFIG)
    ref_pairs = [cp.ParallelPair(u.conv_id, u.utt_id, u.tokens, u.tokens, u.speaker)
                 for c in reference for u in c.utterances]
    spec = cp.SplitSpec(s["train_fraction"], s["valid_fraction"], s["test_fraction"], cfg["seed"])
    keys = cp.split_keys(cp.split_corpus(ref_pairs, spec, by=s["by"]))
    outputs = {"reference": ref_pairs}
    for name, path in variants.items():
        words = cp.ingest_asr_words(_need(path))
        outputs[name] = cp.build_parallel_corpus(reference, words)
    for name, pairs in outputs.items():
        split = cp.apply_split(pairs, keys)
        for part, ps in split.items():
            if s["drop_empty"] and name != "reference":
                ps = [p for p in ps if p.source]
            path = os.path.join(args.out, name, f"{part}.jsonl")
            os.makedirs(os.path.dirname(path), exist_ok=True)
            cp.write_pairs(ps, path)
        stats = {part: cp.corpus_stats(ps) for part, ps in split.items()}
        print(f"{name}: " + ", ".join(f"{k}={v['pairs']}" for k, v in stats.items()))
    _dump_json({name: [list(k) for k in ks] for name, ks in keys.items()},
               os.path.join(args.out, "splits.json"))
    _dump_json(_provenance(args, cfg, "align"), os.path.join(args.out, "run_config.json"))


def cmd_build_lexicon(args):
    cfg = resolved_config(args.config, args.seed)
    k = args.k if args.k is not None else cfg["lexicon"]["k"]
    names = load_ontology(_need(args.ontology))
    pairs = cp.read_pairs(_need(args.pairs))
    lex = build_term_lexicon(names, [p.target for p in pairs], k=k)
    write_lexicon(lex, args.out)
    _dump_json(_provenance(args, cfg, "build-lexicon"), args.out + ".config.json")
    print(f"{len(lex)} terms -> {args.out}")


def _corrector_params(cfg, args):
    params = dict(cfg["corrector"])
    params["random_state"] = cfg["seed"]
    for flag, key in (("epochs", "max_epochs"), ("hidden", "hidden_dim"),
                      ("embedding", "embedding_dim"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("patience", "patience"),
                      ("encoder_layers", "encoder_layers")):
        v = getattr(args, flag, None)
        if v is not None:
            params[key] = v
    return params


def cmd_train_corrector(args):
    cfg = resolved_config(args.config, args.seed)
    train = cp.read_pairs(_need(args.train))
    X, y = [p.source for p in train], [p.target for p in train]
    if args.model == "s2s":
        params = _corrector_params(cfg, args)
        valid = cp.read_pairs(_need(args.valid)) if args.valid else None
        try:
            model = Seq2SeqCorrector(**params)
        except TypeError as exc:
            raise CLIError(f"bad corrector config: {exc}", EXIT_CONFIG) from None
        if valid:
            model.fit(X, y, [p.source for p in valid], [p.target for p in valid])
        else:
            model.fit(X, y)
        cfg["corrector"] = params
    elif args.model == "confusion":
        params = dict(cfg["confusion"])
        if args.min_count is not None:
            params["min_count"] = args.min_count
        model = ConfusionTableCorrector(**params).fit(X, y)
        cfg["confusion"] = params
    else:
        raise CLIError(f"unknown model type {args.model!r}", EXIT_CONFIG)
    model.save(args.out, meta=_provenance(args, cfg, "train-corrector"))
    print(f"{args.model} corrector -> {args.out}")


def cmd_correct(args):
    if args.model == "identity":
        model = IdentityCorrector()
    else:
        if not os.path.exists(os.path.join(args.model, "model.json")):
            raise CLIError(f"no corrector checkpoint in {args.model}", EXIT_MISSING)
        model = load_corrector(args.model)
        if args.beam is not None and isinstance(model, Seq2SeqCorrector):
            model.set_params(beam_size=args.beam)
    pairs = cp.read_pairs(_need(args.input))
    corrected = correct_corpus(model, pairs)
    cp.write_pairs(corrected, args.out)
    _dump_json({"command": "correct", "model": args.model, "input": args.input,
                "beam": args.beam}, args.out + ".config.json")
    print(f"{len(corrected)} pairs -> {args.out}")


def cmd_train_diarizer(args):
    cfg = resolved_config(args.config, args.seed)
    dcfg = dict(cfg["diarizer"])
    window = args.window or dcfg.pop("window", 32)
    dcfg.pop("window", None)
    if args.epochs is not None:
        dcfg["max_epochs"] = args.epochs
    dcfg["random_state"] = cfg["seed"]
    train = make_windows(cp.read_pairs(_need(args.train)), side=args.side, size=window)
    kwargs = {}
    if args.valid:
        valid = make_windows(cp.read_pairs(_need(args.valid)), side=args.side, size=window)
        kwargs = {"X_valid": [w.tokens for w in valid], "y_valid": [w.labels for w in valid]}
    try:
        model = SpeakerRoleClassifier(**dcfg)
    except TypeError as exc:
        raise CLIError(f"bad diarizer config: {exc}", EXIT_CONFIG) from None
    model.fit([w.tokens for w in train], [w.labels for w in train], **kwargs)
    cfg["diarizer"] = dict(dcfg, window=window)
    meta = _provenance(args, cfg, "train-diarizer")
    meta["window"] = window
    model.save(args.out, meta=meta)
    print(f"diarizer -> {args.out}")


def cmd_evaluate(args):
    pairs = cp.read_pairs(_need(args.pairs))
    lex = read_lexicon(_need(args.lexicon)) if args.lexicon else None
    report = evaluate_pairs(args.name, [(p.source, p.target) for p in pairs], lex)
    if args.diarizer:
        if not os.path.exists(os.path.join(args.diarizer, "model.json")):
            raise CLIError(f"no diarizer checkpoint in {args.diarizer}", EXIT_MISSING)
        model = SpeakerRoleClassifier.load(args.diarizer)
        with open(os.path.join(args.diarizer, "model.json"), encoding="utf-8") as fh:
            window = json.load(fh).get("meta", {}).get("window", 32)
        windows = make_windows(pairs, side="source", size=args.window or window)
        report.diarization = evaluate_diarizer(model, windows, threshold=model.threshold)
        if args.predictions:
            write_predictions(model, windows, args.predictions)
    out = {"report": report.to_dict(),
           "config": {"pairs": args.pairs, "lexicon": args.lexicon, "diarizer": args.diarizer,
                      "name": args.name}}
    _dump_json(out, args.out)
    print(f"{args.name}: WER {100 * report.wer:.1f} BLEU {100 * report.bleu:.1f}")


def load_report(path):
    with open(_need(path), encoding="utf-8") as fh:
        obj = json.load(fh)
    return EvalReport.from_dict(obj.get("report", obj))


def cmd_report(args):
    reports = [load_report(p) for p in args.reports]
    lex = read_lexicon(_need(args.lexicon)) if args.lexicon else None
    md = render_markdown(reports, lex)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(md)
        _dump_json({"command": "report", "reports": list(args.reports),
                    "lexicon": args.lexicon}, args.out + ".config.json")
    else:
        sys.stdout.write(md)


def cmd_pipeline(args):
    """simulate -> align -> lexicon -> train -> correct -> evaluate -> report."""
    run_pipeline(args.out, config=args.config, seed=args.seed, epochs=args.epochs)
    print(f"report -> {os.path.join(args.out, 'report.md')}")


def run_pipeline(out, config=None, seed=None, epochs=None, variants=None):
    """Run every stage through the CLI commands; returns the report path."""
    cfg_args = (["--config", config] if config else []) + \
        (["--seed", str(seed)] if seed is not None else [])
    cfg = resolved_config(config, seed)
    variants = variants or list(cfg["channels"])
    ep = ["--epochs", str(epochs)] if epochs is not None else []
    data, splits = os.path.join(out, "data"), os.path.join(out, "splits")
    models, evals = os.path.join(out, "models"), os.path.join(out, "eval")

    def run(argv):
        code = main(argv)
        if code:
            raise CLIError(f"pipeline step failed: {' '.join(argv)}", code)

    run(["simulate", "--out", data] + cfg_args)
    run(["align", "--reference", os.path.join(data, "reference.jsonl"), "--out", splits]
        + [x for v in variants for x in ("--asr", f"{v}={os.path.join(data, f'asr_{v}.jsonl')}")]
        + cfg_args)
    lex_split = cfg["lexicon"]["split"]
    lexicon = os.path.join(out, "lexicon.jsonl")
    run(["build-lexicon", "--ontology", os.path.join(data, "ontology.txt"), "--pairs",
         os.path.join(splits, "reference", f"{lex_split}.jsonl"), "--out", lexicon] + cfg_args)
    diar = os.path.join(models, "diarizer")
    run(["train-diarizer", "--train", os.path.join(splits, "reference", "train.jsonl"),
         "--valid", os.path.join(splits, "reference", "valid.jsonl"), "--out", diar] + cfg_args)
    reports = []
    ref_test = os.path.join(splits, "reference", "test.jsonl")
    reports.append(os.path.join(evals, "reference", "reference.json"))
    run(["evaluate", "--pairs", ref_test, "--name", "reference/reference", "--lexicon", lexicon,
         "--diarizer", diar, "--out", reports[-1]])
    for v in variants:
        vdir = os.path.join(splits, v)
        test = os.path.join(vdir, "test.jsonl")
        for system in ("confusion", "s2s"):
            run(["train-corrector", "--model", system, "--train", os.path.join(vdir, "train.jsonl"),
                 "--valid", os.path.join(vdir, "valid.jsonl"),
                 "--out", os.path.join(models, v, system)] + cfg_args + (ep if system == "s2s" else []))
        for system in ("raw", "confusion", "s2s"):
            pairs = test
            if system != "raw":
                pairs = os.path.join(evals, v, f"{system}.test.jsonl")
                run(["correct", "--model", os.path.join(models, v, system), "--input", test,
                     "--out", pairs])
            reports.append(os.path.join(evals, v, f"{system}.json"))
            run(["evaluate", "--pairs", pairs, "--name", f"{v}/{system}", "--lexicon", lexicon,
                 "--diarizer", diar, "--out", reports[-1]])
    report_md = os.path.join(out, "report.md")
    run(["report", "--reports", *reports, "--lexicon", lexicon, "--out", report_md])
    return report_md


# -- parser ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="adaptr",
        description="Domain adaptation of ASR output by learned error correction.",
        epilog="Set ADAPTR_LOG=DEBUG|INFO|WARNING for verbosity.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON config (simulation, split, model settings); "
                                         "defaults are built in")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
        sp.add_argument("--out", required=True, help=out_help)

    s = sub.add_parser("simulate", help="generate a synthetic reference + ASR corpus")
    common(s, "output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("align", help="align ASR words to reference utterances and split")
    common(s, "output directory (one subdirectory per ASR variant)")
    s.add_argument("--reference", required=True, help="reference JSONL")
    s.add_argument("--asr", action="append", default=[], metavar="NAME=PATH",
                   help="ASR-words JSONL, repeatable")
    s.add_argument("--fractions", type=float, nargs=3, metavar=("TRAIN", "VALID", "TEST"),
                   help="split fractions (default 0.8 0.1 0.1)")
    s.add_argument("--split-by", choices=("utterance", "conversation"),
                   help="split unit (default utterance)")
    s.add_argument("--drop-empty", action="store_true",
                   help="drop pairs whose ASR side is empty")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("build-lexicon", help="build the domain-term lexicon")
    common(s, "lexicon JSONL path")
    s.add_argument("--ontology", required=True, help="one name per line")
    s.add_argument("--pairs", required=True, help="parallel JSONL whose targets are counted")
    s.add_argument("--k", type=int, default=None, help="lexicon size cap (default 200)")
    s.set_defaults(func=cmd_build_lexicon)

    s = sub.add_parser("train-corrector", help="train an S2S or confusion-table corrector")
    common(s, "checkpoint directory")
    s.add_argument("--train", required=True)
    s.add_argument("--valid")
    s.add_argument("--model", choices=("s2s", "confusion"), default="s2s")
    s.add_argument("--epochs", type=int, help="max epochs (default 25)")
    s.add_argument("--hidden", type=int, help="hidden size (default 64)")
    s.add_argument("--embedding", type=int, help="embedding size (default 32)")
    s.add_argument("--encoder-layers", type=int, help="encoder depth (default 2)")
    s.add_argument("--batch-size", type=int, help="batch size (default 16)")
    s.add_argument("--lr", type=float, help="Adam learning rate (default 3e-3)")
    s.add_argument("--patience", type=int, help="early-stopping patience (default 4)")
    s.add_argument("--min-count", type=int, help="confusion-table min count (default 2)")
    s.set_defaults(func=cmd_train_corrector)

    s = sub.add_parser("correct", help="rewrite the ASR side of a parallel corpus")
    s.add_argument("--model", required=True, help="checkpoint directory, or 'identity'")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--beam", type=int, help="beam size for S2S decoding (default 1 = greedy)")
    s.set_defaults(func=cmd_correct)

    s = sub.add_parser("train-diarizer", help="train the speaker-role classifier")
    common(s, "checkpoint directory")
    s.add_argument("--train", required=True)
    s.add_argument("--valid")
    s.add_argument("--side", choices=("target", "source"), default="target",
                   help="transcript side to learn from (default target = reference)")
    s.add_argument("--window", type=int, help="utterances per window (default 32)")
    s.add_argument("--epochs", type=int, help="max epochs (default 20)")
    s.set_defaults(func=cmd_train_diarizer)

    s = sub.add_parser("evaluate", help="WER/BLEU/term and diarization metrics for one corpus")
    s.add_argument("--pairs", required=True, help="parallel JSONL (source = transcript under test)")
    s.add_argument("--name", required=True, help="report row name, VARIANT/SYSTEM")
    s.add_argument("--lexicon")
    s.add_argument("--diarizer", help="diarizer checkpoint directory")
    s.add_argument("--window", type=int, help="override the diarizer window size")
    s.add_argument("--predictions", help="write per-utterance P(Doctor) JSONL here")
    s.add_argument("--out", required=True, help="report JSON path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="render evaluation reports as markdown tables")
    s.add_argument("--reports", nargs="+", required=True)
    s.add_argument("--lexicon", help="lexicon JSONL for the most/least frequent term table")
    s.add_argument("--out", help="markdown path (default stdout)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("pipeline", help="run every stage end to end on simulated data")
    common(s, "output directory")
    s.add_argument("--epochs", type=int, help="S2S max epochs override")
    s.set_defaults(func=cmd_pipeline)
    return p


def _setup_logging():
    level = os.environ.get("ADAPTR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except sim.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
