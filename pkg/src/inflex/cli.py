"""``inflex`` command line: align, hallucinate, train, predict, evaluate, dump-attention.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import kernels
from .align import render_regions, stem_regions
from .corpus import build_vocab, format_example, parse_tsv, write_tsv
from .errors import DataError, InflexError, UsageError
from .hallucinate import hallucinate_dataset
from .metrics import exact_match_accuracy, levenshtein, mean_levenshtein
from .model import decode
from .train import LogRow, load_config, load_run, train, write_run

log = logging.getLogger("inflex")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def language_of(path) -> str:
    """Language id from a file name: ``adyghe-train-low.tsv`` -> ``adyghe``."""
    return Path(path).name.split(".")[0].split("-")[0]


def _read(path, language_id: str | None = None):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    return parse_tsv(p, language_of(p) if language_id is None else language_id)


def _labelled(examples, path):
    if any(e.form is None for e in examples):
        raise DataError(f"{path}: every line needs a form")
    return examples


# ------------------------------------------------------------------ subcommands

def cmd_align(args) -> int:
    data = _labelled(_read(args.input), args.input)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for e in data:
            regions = stem_regions(e.lemma, e.form, args.min_stem)
            out.write("\t".join([e.lemma, e.form,
                                 render_regions(e.lemma, [r.lemma_span for r in regions]),
                                 render_regions(e.form, [r.form_span for r in regions])]) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_hallucinate(args) -> int:
    data = _labelled(_read(args.input), args.input)
    lang = data[0].language_id if data else ""
    alphabet = build_vocab([data]).alphabet(lang)
    hall = hallucinate_dataset(data, alphabet, args.n, args.seed, args.min_stem, args.workers)
    write_tsv(args.out, hall)
    log.info("wrote %d hallucinated triples to %s", len(hall), args.out)
    return 0


def _overrides(args) -> dict[str, str]:
    values = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.hallucinate is not None:
        values["hallucinate"] = str(args.hallucinate)
    if args.no_adv:
        values["adversarial"] = "false"
    return values


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    high = []
    for path in filter(None, (args.high or "").split(",")):
        high.extend(_labelled(_read(path), path))
    low = _labelled(_read(args.low), args.low)
    if not low:
        raise DataError(f"{args.low}: no examples")
    low_lang = low[0].language_id
    dev = _labelled(_read(args.dev, low_lang), args.dev)
    if not dev:
        raise DataError(f"{args.dev}: no examples")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")

    def report(row: LogRow) -> None:
        if not args.quiet:
            print(row.format(), file=sys.stderr, flush=True)

    result = train(high, low, dev, cfg, workers=args.workers, on_epoch=report)
    write_run(out, result)
    ck = result.checkpoints
    print(f"best dev accuracy {ck.best_accuracy.accuracy:.4f}, "
          f"best dev distance {ck.best_levenshtein.distance:.4f} ({result.seconds:.0f}s)")
    return 0


def _predict(args):
    models = load_run(args.model, ensemble=not args.no_ensemble)
    data = _read(args.input)
    if not data:
        raise DataError(f"{args.input}: no examples")
    return data, decode(data, models)


def cmd_predict(args) -> int:
    data, preds = _predict(args)
    write_tsv(args.out, [e.replace(form=pr.form or "_") for e, pr in zip(data, preds)])
    return 0


def cmd_dump_attention(args) -> int:
    data, preds = _predict(args)
    with open(args.out, "w", encoding="utf-8") as fh:
        for e, pr in zip(data, preds):
            rec = {"lemma": e.lemma, "tags": list(e.tags), "prediction": pr.form,
                   "alpha_t": pr.alpha_t.tolist(), "alpha_x": pr.alpha_x.tolist()}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    pred = _read(args.pred, "")
    gold = _labelled(_read(args.gold, ""), args.gold)
    if len(pred) != len(gold):
        raise DataError(f"{args.pred} has {len(pred)} lines, {args.gold} has {len(gold)}")
    for n, (p, g) in enumerate(zip(pred, gold), 1):
        if p.lemma != g.lemma or p.tags != g.tags:
            raise DataError(f"entry {n}: prediction for {p.lemma!r} does not line up with gold {g.lemma!r}")
    pf = [p.form or "" for p in pred]
    gf = [g.form for g in gold]
    print(f"{exact_match_accuracy(pf, gf):.4f}\t{mean_levenshtein(pf, gf):.4f}")
    if args.per_example:
        with open(args.per_example, "w", encoding="utf-8") as fh:
            fh.write("lemma\ttags\tgold\tprediction\tcorrect\tdistance\n")
            for g, p in zip(gold, pf):
                fh.write(f"{g.lemma}\t{';'.join(g.tags)}\t{g.form}\t{p}\t{int(p == g.form)}\t{levenshtein(p, g.form)}\n")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="inflex", description="Low-resource morphological inflection toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("align", help="show aligned stem regions of each lemma/form pair")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out")
    a.add_argument("--min-stem", type=int, default=3)
    a.set_defaults(func=cmd_align)

    h = sub.add_parser("hallucinate", help="generate synthetic triples from a training file")
    h.add_argument("--in", dest="input", required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--n", type=int, default=10000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--min-stem", type=int, default=3)
    h.add_argument("--workers", type=int, default=1)
    h.set_defaults(func=cmd_hallucinate)

    t = sub.add_parser("train", help="run the three training phases")
    t.add_argument("--high", help="comma-separated high-resource files")
    t.add_argument("--low", required=True)
    t.add_argument("--dev", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="key = value file of training settings")
    t.add_argument("--seed", type=int)
    t.add_argument("--hallucinate", type=int, metavar="N", help="add N hallucinated triples")
    t.add_argument("--no-adv", action="store_true", help="disable the language discriminator")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    t.add_argument("--workers", type=int, default=1, help="processes for hallucination")
    t.add_argument("--quiet", action="store_true", help="do not echo the epoch log")
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("predict", cmd_predict, "inflect a file with a trained model"),
                                 ("dump-attention", cmd_dump_attention, "write attention matrices as JSON lines")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True, help="training output directory")
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--no-ensemble", action="store_true", help="use only the best-accuracy checkpoint")
        p.set_defaults(func=func)

    e = sub.add_parser("evaluate", help="exact-match accuracy and mean edit distance")
    e.add_argument("--pred", required=True)
    e.add_argument("--gold", required=True)
    e.add_argument("--per-example", metavar="TSV")
    e.set_defaults(func=cmd_evaluate)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        log.debug("edit-distance backend: %s", kernels.BACKEND)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        return args.func(args)
    except InflexError as exc:
        print(f"inflex: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"inflex: error: {exc}", file=sys.stderr)
        return DataError.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
