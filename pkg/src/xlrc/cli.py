"""Command-line interface: corpus building, training, prediction, scoring."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (CorpusError, build_parallel_corpus, load_lexicon,
                     parse_squad, pseudo_translate, write_parallel_corpus)
from .fusion import trace_to_json
from .metrics import (MetricsError, evaluate, golds_from_examples,
                      read_predictions, write_predictions)
from .span import predict_span
from .tensor import ContractError
from .training import load_dataset, load_schedule, predict_answers, run_schedule

logger = logging.getLogger(__name__)


def _cmd_build_corpus(args) -> int:
    targets = parse_squad(args.target, lang=args.target_lang)
    translations_path = Path(args.translations)
    if translations_path.is_dir():
        lexicons = {p.stem: load_lexicon(p)
                    for p in sorted(translations_path.glob("*.tsv"))}
        if not lexicons:
            print(f"no *.tsv lexicons in {translations_path}", file=sys.stderr)
            return 2
    else:
        lang = args.langs[0] if args.langs else translations_path.stem
        lexicons = {lang: load_lexicon(translations_path)}
    if args.langs:
        missing = [l for l in args.langs if l not in lexicons]
        if missing:
            print(f"no lexicon for language(s) {missing}", file=sys.stderr)
            return 2
        lexicons = {l: lexicons[l] for l in args.langs}

    translations = {
        lang: {ex.id: pseudo_translate(ex, lang, lex) for ex in targets}
        for lang, lex in lexicons.items()
    }
    corpus = build_parallel_corpus(targets, translations)
    write_parallel_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} examples with sources "
          f"{sorted(lexicons)} to {args.out}")
    return 0


def _cmd_train(args) -> int:
    schedule = load_schedule(args.schedule)
    result = run_schedule(schedule, seed=args.seed)
    out = Path(args.out)
    save_checkpoint(out, result.model, result.optimizer, seed=args.seed,
                    stage_index=len(result.stages) - 1)
    (out / "eval_report.json").write_text(
        json.dumps(result.report.to_json(), ensure_ascii=False, sort_keys=True,
                   indent=2) + "\n", encoding="utf-8")
    (out / "loss_log.json").write_text(
        json.dumps([{"label": s.label, "hparams": s.hparams.as_text(),
                     "multilingual": s.multilingual,
                     "epoch_losses": s.epoch_losses}
                    for s in result.stages], indent=2) + "\n",
        encoding="utf-8")
    for stage in result.stages:
        print(f"{stage.label} ({stage.hparams.as_text()}): "
              f"final loss {stage.epoch_losses[-1]:.6f}")
    print(result.report.to_text())
    return 0


def _cmd_predict(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    model = bundle.model
    examples = load_dataset(args.data, multilingual=True)
    max_len = args.max_len or model.config.encoder.max_position
    predictions = predict_answers(model, examples, max_len)
    write_predictions(predictions, args.out)
    print(f"wrote {len(predictions)} predictions to {args.out}")

    if args.trace_id:
        by_id = {ex.id: ex for ex in examples}
        if args.trace_id not in by_id:
            print(f"no example with id {args.trace_id!r}", file=sys.stderr)
            return 2
        ex = by_id[args.trace_id]
        langs = model.config.source_langs
        multilingual = bool(langs) and all(l in ex.sources for l in langs)
        seq, trace = model.encode_example(ex, max_len, multilingual)
        pred = predict_span(seq, trace.enhanced, model.span,
                            model.config.max_answer_len)
        obj = trace_to_json(trace, args.trace_id)
        obj["answer_text"] = pred.answer_text
        obj["best_span"] = list(pred.best_span)
        Path(args.trace_out).write_text(
            json.dumps(obj, ensure_ascii=False) + "\n", encoding="utf-8")
        print(f"wrote fusion trace for {args.trace_id!r} to {args.trace_out}")
    return 0


def _load_golds(path: str):
    if Path(path).suffix == ".jsonl":
        examples = [ex.target for ex in load_dataset(path, multilingual=True)]
    else:
        examples = parse_squad(path)
    return golds_from_examples(examples)


def _cmd_eval(args) -> int:
    predictions = read_predictions(args.pred)
    golds = _load_golds(args.gold)
    report = evaluate(predictions, golds)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_json(), ensure_ascii=False, sort_keys=True,
                       indent=2) + "\n", encoding="utf-8")
    print(report.to_text())
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite
    ok, lines = run_suite(n_configs=args.configs, seed=args.seed)
    for line in lines:
        print(line)
    print("gradcheck: " + ("all configurations passed" if ok else "FAILED"))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlrc",
        description="Multilingual span-extraction reading comprehension")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus",
                       help="translate a SQuAD-format dataset into a "
                            "multilingual parallel corpus")
    p.add_argument("--target", required=True, help="SQuAD-format JSON file")
    p.add_argument("--target-lang", default="zh",
                   help="language code of the target dataset (default zh)")
    p.add_argument("--translations", required=True,
                   help="directory of <lang>.tsv lexicons, or one lexicon file")
    p.add_argument("--langs", type=lambda s: s.split(","), default=None,
                   help="comma-separated source languages to include")
    p.add_argument("--out", required=True, help="output corpus .jsonl path")
    p.set_defaults(func=_cmd_build_corpus)

    p = sub.add_parser("train", help="run a staged training schedule")
    p.add_argument("--schedule", required=True, help="schedule JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="decode answers with a checkpoint")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True,
                   help="corpus .jsonl or SQuAD-format .json")
    p.add_argument("--out", required=True, help="prediction JSON path")
    p.add_argument("--max-len", type=int, default=None,
                   help="max sequence length (default: encoder max_position)")
    p.add_argument("--trace-id", default=None,
                   help="also dump the fusion trace for this example id")
    p.add_argument("--trace-out", default="trace.json")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold answers")
    p.add_argument("--pred", required=True, help="prediction JSON file")
    p.add_argument("--gold", required=True,
                   help="SQuAD-format .json or corpus .jsonl with answers")
    p.add_argument("--report", default=None,
                   help="optional path for the full JSON report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="run the finite-difference gradient suite")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CorpusError, MetricsError, ContractError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
