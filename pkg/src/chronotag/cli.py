"""Command-line front end.

Commands: prepare, stats, pretrain, train, paths, hypotheses, report, synth.
Global flags: --config FILE, --seed INT, --jobs INT, --out DIR. Any other
``--dotted.key value`` pair overrides that configuration entry.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import build_config, resolve_config
from .corpus import corpus_stats, load_corpus
from .errors import ConfigError, DataError, NumericalError
from .pipeline import (
    render_stats_markdown,
    resolve_corpus,
    stage_hypotheses,
    stage_paths,
    stage_prepare,
    stage_pretrain,
    stage_report,
    stage_synth,
    stage_train,
    _stats_rows,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="chronotag", description=__doc__, add_help=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="YAML configuration file")
    common.add_argument("--seed", type=int, metavar="INT", help="override the master seed")
    common.add_argument("--jobs", type=int, default=1, metavar="INT",
                        help="concurrent training jobs (default 1)")
    common.add_argument("--out", metavar="DIR", help="override the output directory")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("prepare", parents=[common],
                   help="write the four corpus variants and the stats tables")
    p_stats = sub.add_parser("stats", parents=[common],
                             help="print corpus statistics by reign")
    p_stats.add_argument("--corpus", metavar="FILE",
                         help="corpus file (defaults to the configured source)")
    sub.add_parser("pretrain", parents=[common],
                   help="pretrain the forward/backward character models")
    p_train = sub.add_parser("train", parents=[common], help="train one tagger")
    p_train.add_argument("--model", required=True, help="model name from the config")
    p_train.add_argument("--style", required=True, help="training style: marked or unmarked")
    p_train.add_argument("--train-seed", type=int, required=True, help="training seed")
    sub.add_parser("paths", parents=[common],
                   help="run the six transfer paths for every model and seed")
    p_hyp = sub.add_parser("hypotheses", parents=[common],
                           help="run the four hypothesis tests on the results matrix")
    p_hyp.add_argument("--alpha", type=float, help="significance threshold override")
    sub.add_parser("report", parents=[common],
                   help="re-render the combined report from existing CSVs")
    p_synth = sub.add_parser("synth", parents=[common],
                             help="generate a synthetic corpus file")
    p_synth.add_argument("--dest", metavar="FILE", default="synthetic.jsonl",
                         help="where to write the corpus (default synthetic.jsonl)")
    return parser


def _parse_overrides(tokens: list[str]) -> list[tuple[str, str]]:
    overrides = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise _UsageError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, _, value = key.partition("=")
        else:
            i += 1
            if i >= len(tokens):
                raise _UsageError(f"override {token!r} needs a value")
            value = tokens[i]
        overrides.append((key, value))
        i += 1
    return overrides


def _load(args, overrides):
    if args.seed is not None:
        overrides = overrides + [("seed", str(args.seed))]
    if args.out is not None:
        overrides = overrides + [("out", args.out)]
    return build_config(resolve_config(args.config, overrides))


def _say(message: str) -> None:
    print(message)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        overrides = _parse_overrides(extra)
        cfg = _load(args, overrides)

        if args.command == "prepare":
            stage_prepare(cfg, say=_say)
        elif args.command == "stats":
            if args.corpus is not None:
                source = Path(args.corpus)
                if not source.exists():
                    raise DataError(f"corpus file not found: {source}")
                corpus = load_corpus(source)
            else:
                corpus = resolve_corpus(cfg)
            corpus_stats(corpus)  # validates non-emptiness
            print(render_stats_markdown(_stats_rows(corpus)))
        elif args.command == "pretrain":
            stage_pretrain(cfg, say=_say)
        elif args.command == "train":
            stage_train(cfg, args.model, args.style, args.train_seed, say=_say)
        elif args.command == "paths":
            stage_paths(cfg, jobs=args.jobs, say=_say)
        elif args.command == "hypotheses":
            stage_hypotheses(cfg, alpha=args.alpha, say=_say)
        elif args.command == "report":
            stage_report(cfg, say=_say)
        elif args.command == "synth":
            stage_synth(cfg, Path(args.dest), say=_say)
        return EXIT_OK
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
