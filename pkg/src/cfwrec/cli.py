"""Command line entry point: ``cfwrec run|evaluate|report``.

Exit codes: 0 success, 1 configuration error, 2 runtime error. Set
``CFWREC_LOG_LEVEL`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .cfw import read_weights, weighted_content_similarity
from .evaluation import compare_report, evaluate_cold, format_tsv, parse_tsv
from .experiment import ConfigError, StageError, load_config, prepare, run_experiment
from .ingest import bundle_from_assignment, read_split_manifest

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("cfwrec")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    result = run_experiment(cfg)
    sys.stdout.write(compare_report(result.reports))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    ds = prepare(cfg)
    assignment = read_split_manifest(args.split_manifest, ds.items)
    bundle = bundle_from_assignment(ds.urm, assignment, seed=cfg.split_seed, holdout=0.0)
    w = read_weights(args.model)
    s = weighted_content_similarity(ds.icm, w, args.neighbours or cfg.neighbours)
    report = evaluate_cold(s, bundle, args.cutoff or cfg.cutoff, cfg.min_rating,
                           name=args.name or Path(args.model).stem)
    sys.stdout.write(format_tsv([report]) if args.tsv else compare_report([report]))
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = []
    for path in args.files:
        reports.extend(parse_tsv(Path(path).read_text(encoding="utf-8")))
    sys.stdout.write(compare_report(reports))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfwrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the two-step experiment described by an INI config")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override [eval] output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="score a saved weights file on the cold items of a split manifest")
    p.add_argument("model")
    p.add_argument("split_manifest")
    p.add_argument("--config", required=True, help="experiment config supplying the dataset section")
    p.add_argument("--cutoff", type=int)
    p.add_argument("--neighbours", type=int)
    p.add_argument("--name")
    p.add_argument("--tsv", action="store_true", help="emit TSV instead of a table")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="merge metric TSV files into one comparison table")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CFWREC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        log.setLevel(level)
    except ValueError:
        log.setLevel(logging.WARNING)
        log.warning("ignoring unknown CFWREC_LOG_LEVEL %r", level)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except StageError as err:
        log.error("%s", err)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as err:
        log.error("%s", err)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
