"""Command-line entry point.

    mvonline run CONFIG [--seed N] [--horizon N] [--output PATH] [--report-every N]
    mvonline compare CONFIG [CONFIG ...] [same overrides]

``run`` prints one summary line and writes the JSONL trace named by the
config (or ``--output``). ``compare`` runs every config on the same realized
path and prints final metrics plus pairwise differences. Flags override the
matching config fields; for ``compare`` ``--output`` names a directory that
receives one trace per config.

Exit codes: 0 success, 2 invalid configuration or usage, 3 bad input data,
1 any other failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigurationError, DataError, MVError
from .experiment import compare_strategies, load_config, run_experiment, summary_line

log = logging.getLogger("mvonline")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--output")
    p.add_argument("--report-every", type=int, dest="report_every")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvonline", description="Online mean-variance experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    _add_overrides(run)
    cmp_ = sub.add_parser("compare", help="run several strategies on one path")
    cmp_.add_argument("configs", nargs="+")
    _add_overrides(cmp_)
    return parser


def _load(path, args, output=None):
    cfg = load_config(path)
    return cfg.with_overrides(seed=args.seed, horizon=args.horizon,
                              report_every=args.report_every, output=output)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _load(args.config, args, args.output)
            res = run_experiment(cfg)
            print(summary_line(res))
            if cfg.output:
                log.info("trace written to %s", cfg.output)
        else:
            cfgs = []
            for path in args.configs:
                out = None
                if args.output:
                    stem = os.path.splitext(os.path.basename(path))[0]
                    out = os.path.join(args.output, f"{stem}.jsonl")
                cfgs.append(_load(path, args, out))
            for line in compare_strategies(cfgs).lines():
                print(line)
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MVError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
