"""Command line: ``kshydro run|validate|list-experiments``.

Exit codes: 0 all checks pass, 1 a check or stage failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import EXPERIMENT_NAMES, ConfigError, load_config, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kshydro", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="override the configured output directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="thread budget (recorded in the manifest)")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="execute an experiment")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", parents=[common], help="schema check only")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", parents=[common], help="print experiment names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)

    if args.command == "list-experiments":
        print("\n".join(EXPERIMENT_NAMES))
        return 0
    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.output_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        if not args.quiet:
            print(f"ok: {cfg.experiment}")
        return 0

    manifest = run(cfg, threads=args.threads)
    if not args.quiet:
        verdict = "all checks passed" if manifest.all_passed else f"status {manifest.status}, checks failed"
        print(f"{cfg.experiment}: {verdict}; manifest in {cfg.resolved_output_dir()}")
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
