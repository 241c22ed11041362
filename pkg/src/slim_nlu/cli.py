"""Command-line entry point: generate, train, eval, predict, search."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import data as D
from .checkpoint import load_checkpoint
from .errors import DivergenceError, InputError, SearchError, SlimError, StateError
from .generate import GeneratorConfig, generate
from .search import SearchSpace, run_search
from .train import RunConfig, check_known_labels, evaluate_model, run_training

logger = logging.getLogger("slim_nlu")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
SPLITS = ("train", "valid", "test")


def _read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise InputError(f"{path} must hold a JSON object")
    return obj


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_generate(args) -> int:
    config = GeneratorConfig.from_file(args.config) if args.config else GeneratorConfig()
    seed = config.seed if args.seed is None else args.seed
    if any(c < 0 for c in args.counts):
        raise InputError(f"counts must be >= 0, got {args.counts}")
    # one stream split in order keeps the three files disjoint draws
    records = generate(config, sum(args.counts), seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = 0
    summary = {}
    for split, count in zip(SPLITS, args.counts):
        chunk = records[start:start + count]
        start += count
        D.save(chunk, out / f"{split}.jsonl")
        if count == 0:
            logger.warning("%s split is empty; wrote an empty %s.jsonl", split, split)
        hist = Counter(len(r.intents) for r in chunk)
        summary[split] = {"records": count, "intent_count_histogram": {str(k): hist[k] for k in sorted(hist)}}
    _dump(summary)
    return EXIT_OK


def _run_config(args) -> RunConfig:
    obj = _read_json(args.config) if args.config else {}
    for key, flag in (("train_path", "train"), ("valid_path", "valid"), ("test_path", "test"),
                      ("out_dir", "out"), ("seed", "seed"), ("variant", "variant"), ("threshold", "threshold"),
                      ("max_slots", "max_slots"), ("max_epochs", "max_epochs")):
        value = getattr(args, flag, None)
        if value is not None:
            obj[key] = value
    return RunConfig.from_dict(obj)


def cmd_train(args) -> int:
    report = run_training(_run_config(args))
    _dump(report)
    return EXIT_OK


def _load_model(args):
    model, meta = load_checkpoint(args.checkpoint)
    if args.threshold is not None:
        model.threshold = args.threshold
    if args.max_slots is not None:
        model.max_slots = args.max_slots
    return model, meta


def cmd_eval(args) -> int:
    model, _ = _load_model(args)
    records = D.load(args.data)
    check_known_labels(model, records, Path(args.data).name)
    report = evaluate_model(model, records).to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _dump(report)
    return EXIT_OK


def cmd_predict(args) -> int:
    tokens = list(args.tokens)
    if args.text is not None:
        tokens += args.text.split()
    model, _ = _load_model(args)
    _dump(model.predict_tokens(tokens).to_dict())
    return EXIT_OK


def cmd_search(args) -> int:
    base = _run_config(args)
    space = SearchSpace.from_dict(_read_json(args.space)) if args.space else SearchSpace()
    if args.trials is not None:
        space = SearchSpace(space.dropout, space.lr, space.weight, args.trials)
    if not base.out_dir:
        raise InputError("search needs --out")
    ranked = run_search(space, base, base.out_dir, master_seed=base.seed)
    _dump({"best": ranked[0], "trials": len(ranked), "failed": sum(r["status"] != "ok" for r in ranked)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    inference = argparse.ArgumentParser(add_help=False)
    inference.add_argument("--threshold", type=float, help="intent decision threshold")
    inference.add_argument("--max-slots", type=int, dest="max_slots", help="slots per utterance")

    training = argparse.ArgumentParser(add_help=False, parents=[inference])
    training.add_argument("--variant", choices=["full", "no-slot-intent", "no-constraint"])
    training.add_argument("--train", help="training JSON Lines file")
    training.add_argument("--valid", help="validation JSON Lines file")
    training.add_argument("--test", help="optional test JSON Lines file")
    training.add_argument("--max-epochs", type=int, dest="max_epochs")

    parser = argparse.ArgumentParser(prog="slim", description="Joint multi-intent detection and slot filling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write synthetic train/valid/test files")
    p.add_argument("--counts", type=int, nargs=3, default=[2000, 200, 200], metavar=("TRAIN", "VALID", "TEST"))
    p.set_defaults(func=cmd_generate, out=".")

    p = sub.add_parser("train", parents=[common, training], help="train with early stopping")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, inference], help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common, inference], help="predict intents and slots for tokens")
    p.add_argument("checkpoint")
    p.add_argument("tokens", nargs="*")
    p.add_argument("--text", help="whitespace-separated utterance")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("search", parents=[common, training], help="randomized hyperparameter search")
    p.add_argument("--space", help="JSON search space")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (DivergenceError, SearchError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SlimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        logger.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
