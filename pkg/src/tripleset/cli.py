"""Command line: train, eval, predict, verify-appendix, gen-synthetic.

Exit status is 0 on success, 1 on validation or assertion failure and 2 on
I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import appendix
from .data import (FORMATS, MatchingMode, generate_synthetic, load_corpus, load_inventories,
                   save_inventories, write_corpus)
from .model import load_model, save_model
from .training import RunConfig, evaluate, model_config_for, predict_corpus, train

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

log = logging.getLogger("tripleset")


class ValidationFailure(Exception):
    pass


def _write_report(report, out: str | None) -> None:
    print(report.to_text())
    if out:
        base = Path(out)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".json").write_text(report.to_json())
        base.with_suffix(".txt").write_text(report.to_text() + "\n")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.mode is not None:
        cfg.data["mode"] = args.mode
    if getattr(args, "epochs", None) is not None:
        cfg.training.epochs = args.epochs
    for key in ("train", "test", "format"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.data[key] = value
    if args.checkpoint is not None:
        cfg.output["checkpoint_dir"] = args.checkpoint
    if args.out is not None:
        cfg.output["report"] = args.out
    if not cfg.data.get("train"):
        raise ValidationFailure("no training corpus given (data.train in the config or --train)")
    for key in ("train", "test"):
        path = cfg.data.get(key)
        if path and not Path(path).is_file():
            raise FileNotFoundError(f"{key} corpus not found: {path}")
    return cfg


def cmd_train(args) -> int:
    cfg = _run_config(args)
    mode = MatchingMode.parse(cfg.data["mode"])
    m = cfg.model.get("m", 10)
    corpus = load_corpus(cfg.data["train"], cfg.data.get("format", "native-jsonl"), mode, m=m)
    if len(corpus) == 0:
        raise ValidationFailure(f"no usable sentences in {cfg.data['train']}")
    model_cfg = model_config_for(corpus, cfg.model)
    too_long = [i for i, s in enumerate(corpus) if len(s.tokens) + 2 > model_cfg.l_max]
    if too_long:
        raise ValidationFailure(f"{len(too_long)} sentences exceed l_max={model_cfg.l_max} "
                                f"(first at index {too_long[0]}); raise model.l_max")
    out_dir = Path(cfg.output["checkpoint_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "train_log.jsonl", "w") as logf:
        def record(rec):
            logf.write(json.dumps(rec) + "\n")
            if rec["kind"] == "epoch":
                print(json.dumps(rec), flush=True)

        result = train(corpus, cfg.training, model_config=model_cfg, on_record=record, mode=mode)
    save_model(result.model, out_dir, extra={"run": cfg.to_dict(), "best_dev_f1": result.best_f1,
                                              "best_epoch": result.best_epoch})
    save_inventories(corpus, out_dir)
    print(f"checkpoint written to {out_dir} (best dev F1 {result.best_f1:.4f} at epoch {result.best_epoch})")
    if cfg.data.get("test"):
        test = load_corpus(cfg.data["test"], cfg.data.get("format", "native-jsonl"), mode,
                           relations=corpus.relations, vocab=corpus.vocab, split="test")
        _write_report(evaluate(result.model, test, mode), cfg.output.get("report"))
    return EXIT_OK


def _load_checkpoint(path):
    if path is None:
        raise ValidationFailure("--checkpoint is required")
    directory = Path(path)
    if not (directory / "params.bin").is_file():
        raise FileNotFoundError(f"no checkpoint at {directory}")
    model, record = load_model(directory)
    vocab, relations = load_inventories(directory)
    if len(vocab) != model.config.vocab_size or len(relations) != model.config.t:
        raise ValidationFailure(
            f"checkpoint inventories do not match its model: vocab {len(vocab)} vs {model.config.vocab_size}, "
            f"relations {len(relations)} vs {model.config.t}")
    return model, record, vocab, relations


def cmd_eval(args) -> int:
    model, record, vocab, relations = _load_checkpoint(args.checkpoint)
    mode = MatchingMode.parse(args.mode or record.get("run", {}).get("data", {}).get("mode", "exact"))
    corpus = load_corpus(args.corpus, args.format, mode, relations=relations, vocab=vocab, split="test")
    _write_report(evaluate(model, corpus, mode), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _, vocab, relations = _load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus, args.format, relations=None, vocab=vocab, split="predict")
    preds = predict_corpus(model, corpus, threshold=args.threshold)
    lines = []
    for sent, triples in zip(corpus, preds):
        items = [{"relation": relations.names[t.relation],
                  "subj": [t.sub_start, t.sub_end], "obj": [t.obj_start, t.obj_end],
                  "subject": " ".join(sent.tokens[t.sub_start:t.sub_end + 1]),
                  "object": " ".join(sent.tokens[t.obj_start:t.obj_end + 1]),
                  "confidence": t.confidence} for t in triples]
        lines.append(json.dumps({"text": sent.text, "tokens": sent.tokens, "triples": items}))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify_appendix(args) -> int:
    overrides = {}
    for item in args.perturb or []:
        head, j, pos, value = item.split(",")
        overrides[(head, int(j), int(pos))] = float(value)
    checks = appendix.verify_worked_example(overrides or None)
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} check(s) failed; first: {failed[0].name}")
        return EXIT_INVALID
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    corpus = generate_synthetic(args.seed if args.seed is not None else 0, args.n, args.relations,
                                args.max_triples)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out)
    Path(str(out) + ".manifest.json").write_text(json.dumps(corpus.manifest, indent=1))
    print(f"wrote {len(corpus)} sentences to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripleset", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=True, out=True):
        p.add_argument("--config", help="JSON run configuration; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=[m.value for m in MatchingMode])
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint directory")
        if out:
            p.add_argument("--out", help="output path")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.add_argument("--train", help="training corpus")
    p.add_argument("--test", help="optional test corpus scored after training")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    common(p)
    p.add_argument("corpus")
    p.add_argument("--format", choices=FORMATS, default="native-jsonl")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write extracted triples as JSON lines")
    common(p)
    p.add_argument("corpus")
    p.add_argument("--format", choices=FORMATS, default="native-jsonl")
    p.add_argument("--threshold", type=float, default=0.0, help="minimum triple confidence (default off)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify-appendix", help="recompute the worked matching-loss example")
    p.add_argument("--perturb", action="append", metavar="HEAD,QUERY,POS,VALUE",
                   help="override one fixture probability (negative control)")
    p.set_defaults(func=cmd_verify_appendix)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    common(p, checkpoint=False, out=False)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--relations", type=int, default=4)
    p.add_argument("--max-triples", type=int, default=5)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationFailure, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
