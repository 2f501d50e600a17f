"""Command-line front door: prepare | train | generate | score | gradcheck.

Settings come from an optional JSON config file; command-line flags override
file values, and the effective configuration is echoed to the log. Output
files are written via a temp-file rename so a failed run never leaves a
partial artifact. Log verbosity follows the INFOSUM_LOG environment
variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from infosum import bpe, corpus
from infosum.evalsuite import normalize_whitespace, report_to_json, score_corpus
from infosum.gradcheck import run_gradcheck
from infosum.model import (
    INFERENCE_PROFILES,
    BeamSettings,
    ModelConfig,
    beam_search,
    init_params,
    load_checkpoint,
)
from infosum.trainer import TrainConfig, train

log = logging.getLogger("infosum")


def _setup_logging():
    level = os.environ.get("INFOSUM_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(message)s")


def _atomic_write(path, render):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        render(fh)
    os.replace(tmp, path)


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _merged(section: dict, overrides: dict) -> dict:
    out = dict(section)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def cmd_prepare(args) -> int:
    cfg = _load_config(args.config).get("prepare", {})
    merge_count = args.merge_count if args.merge_count is not None else cfg.get("merge_count", 200)
    source_limit = args.source_limit if args.source_limit is not None else cfg.get("source_limit", 128)
    summary_limit = args.summary_limit if args.summary_limit is not None else cfg.get("summary_limit", 48)
    log.info(json.dumps({"command": "prepare", "merge_count": merge_count,
                         "source_limit": source_limit, "summary_limit": summary_limit}))

    rejects = []
    docs = corpus.load_annotated(args.input, on_reject=lambda n, m: rejects.append((n, m)))
    for lineno, msg in rejects:
        log.warning("rejected line %d: %s", lineno, msg)
    if not docs:
        log.error("no valid records in %s", args.input)
        return 1
    docs = [corpus.filter_entities(d) for d in docs]
    word_corpus = [d.doc_words for d in docs] + [d.summary_words for d in docs]
    table = bpe.train_merges(word_corpus, merge_count)
    examples = []
    for doc in docs:
        ex = corpus.build_example(doc, table, source_limit, summary_limit)
        if ex is not None:
            examples.append(ex)

    os.makedirs(args.out_dir, exist_ok=True)
    tok_path = os.path.join(args.out_dir, "tokenizer.json")
    ex_path = os.path.join(args.out_dir, "examples.jsonl")
    _atomic_write(tok_path, lambda fh: fh.write(table.to_json()))
    _atomic_write(ex_path, lambda fh: corpus.write_examples(fh, examples))
    log.info("wrote %d examples, vocab size %d", len(examples), table.size)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    table = bpe.MergeTable.load(args.tokenizer)
    dataset = corpus.load_examples(args.data)
    val = corpus.load_examples(args.val) if args.val else []

    model_section = _merged(cfg.get("model", {}), {"seed": args.seed})
    model_section.setdefault("vocab_size", table.size)
    model_config = ModelConfig(**model_section)
    train_overrides = {
        "seed": args.seed,
        "patience": args.patience,
        "alpha_ot": args.alpha_ot,
        "alpha_anig": args.alpha_anig,
        "alpha_je": args.alpha_je,
    }
    train_config = TrainConfig(**_merged(cfg.get("train", {}), train_overrides))
    log.info(json.dumps({"command": "train", "model": asdict(model_config),
                         "train": asdict(train_config)}, sort_keys=True))

    os.makedirs(args.out_dir, exist_ok=True)
    params = init_params(model_config)
    train(
        dataset,
        val,
        model_config,
        train_config,
        params,
        table,
        log_path=os.path.join(args.out_dir, "epochs.jsonl"),
        checkpoint_path=os.path.join(args.out_dir, "checkpoint.json"),
    )
    return 0


def _beam_settings(args, cfg) -> BeamSettings:
    if args.profile:
        return INFERENCE_PROFILES[args.profile]
    section = _merged(cfg.get("beam", {}), {})
    if section:
        return BeamSettings(**section)
    return BeamSettings(max_length=48, min_length=1, beams=4, length_penalty=1.0)


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    params, model_config = load_checkpoint(args.checkpoint)
    table = bpe.MergeTable.load(args.tokenizer)
    settings = _beam_settings(args, cfg)
    log.info(json.dumps({"command": "generate", "beam": asdict(settings),
                         "normalize": bool(args.normalize)}, sort_keys=True))

    with open(args.input, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]

    outputs = []
    for line in lines:
        ids, _ = bpe.encode_words(line.split(), table)
        ids = ids[: model_config.max_source]
        out_ids = beam_search(ids, params, model_config, settings, table.bos_id, table.eos_id)
        text = bpe.decode(out_ids, table)
        if args.normalize:
            text = normalize_whitespace(text)
        outputs.append(text)

    _atomic_write(args.output, lambda fh: fh.write("\n".join(outputs) + "\n"))
    return 0


def cmd_score(args) -> int:
    with open(args.candidates, encoding="utf-8") as fh:
        cands = [line.rstrip("\n") for line in fh]
    with open(args.references, encoding="utf-8") as fh:
        refs = [line.rstrip("\n") for line in fh]
    report = score_corpus(cands, refs)
    _atomic_write(args.output, lambda fh: fh.write(report_to_json(report)))
    mean = report["mean"]
    log.info(json.dumps({"command": "score", "mean": mean}, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = run_gradcheck(seed=seed, step=args.step, tol=args.tol)
    ok = True
    for term, report in reports.items():
        status = "pass" if report.passed else "FAIL"
        print(f"{term}: {status} (max rel err {report.worst():.3e}, tol {report.tol:g})")
        ok = ok and report.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infosum")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="annotations JSONL -> tokenizer + example files")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--merge-count", type=int, default=None)
    p.add_argument("--source-limit", type=int, default=None)
    p.add_argument("--summary-limit", type=int, default=None)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train a model and write checkpoints + epoch log")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--alpha-ot", type=float, default=None)
    p.add_argument("--alpha-anig", type=float, default=None)
    p.add_argument("--alpha-je", type=float, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="one summary per input line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--profile", choices=sorted(INFERENCE_PROFILES))
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("score", help="ROUGE report for candidate vs reference files")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return 1
    except (ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
