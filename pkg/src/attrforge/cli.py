"""Command-line entry point: ``attrforge {synth,iterate,eval,report}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import (
    ADAPTERS,
    EXIT_BACKEND,
    EXIT_VALIDATION,
    StageFailed,
    cmd_eval,
    cmd_iterate,
    cmd_report,
    cmd_synth,
)
from .store import SchemaError


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML run configuration (ATTRFORGE_CONFIG takes precedence)")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--parallelism", type=int, help="concurrent work items within a stage")
    common.add_argument("--workspace", help="workspace directory")
    common.add_argument("--force", action="store_true", help="redo a stage that is already complete")
    common.add_argument("--mock", action="store_true", help="bind every backend role to in-process mocks")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="attrforge", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize attribution examples and the warm-up dataset")
    p.add_argument("--queries", help="input queries JSONL")

    p = sub.add_parser("iterate", parents=[common], help="sample, score, select and pair for one iteration")
    p.add_argument("--iter", dest="iteration", type=int, required=True, metavar="K")

    p = sub.add_parser("eval", parents=[common], help="citation quality and correctness of predictions")
    p.add_argument("--adapter", choices=ADAPTERS, default="generic")
    p.add_argument("--predictions", required=True, help="predictions JSONL")
    p.add_argument("--gold", help="optional gold JSONL keyed by query_id")

    p = sub.add_parser("report", parents=[common], help="pass-rate and dataset summary from the manifest")
    p.add_argument("--json", action="store_true", dest="as_json")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opt = lambda name: getattr(args, name, None)  # noqa: E731
    logging.basicConfig(
        level=logging.INFO if opt("verbose") else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        "global_seed": opt("seed"),
        "parallelism": opt("parallelism"),
        "workspace": opt("workspace"),
        "mock": opt("mock"),
        "queries": opt("queries"),
    }
    force = bool(opt("force"))
    try:
        cfg = load_config(opt("config"), overrides)
        if args.command == "synth":
            result = cmd_synth(cfg, force=force)
        elif args.command == "iterate":
            result = cmd_iterate(cfg, args.iteration, force=force)
        elif args.command == "eval":
            result = cmd_eval(cfg, args.predictions, args.adapter, args.gold, force=force)
        else:
            result = cmd_report(cfg, as_json=args.as_json)
    except (ConfigError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageFailed as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    print(result.message.rstrip("\n"))
    return result.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
