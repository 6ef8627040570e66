"""Command-line entry point: corpus generation and training."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from toylm.config import load_config
from toylm.corpus import generate_corpus
from toylm.train import DivergenceError, train_and_log

log = logging.getLogger("toylm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toylm",
        description="Train a tiny character LM and log per-position losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="generate a deterministic text corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--chars", type=int, default=2_000_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train and emit loss logs")
    p.add_argument("--config", required=True, help="HarnessConfig JSON")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TOYLM_LOG_LEVEL", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "corpus":
            generate_corpus(args.out, args.chars, args.seed)
            log.info("wrote corpus to %s", args.out)
        else:
            train_and_log(load_config(args.config), args.out)
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except DivergenceError as exc:
        log.error("diverged: %s", exc)
        return 4
    except (ValueError, KeyError) as exc:
        log.error("config: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
