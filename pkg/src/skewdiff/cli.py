"""Command-line entry point: ``skewdiff simulate | analyze | report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .ensemble import SEED_ENV, WORKERS_ENV, run_ensemble
from .io import (
    ANALYSIS,
    ConfigError,
    DataError,
    load_analysis_config,
    load_config,
    load_run,
    write_json,
    write_run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("skewdiff")


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}") from None


def cmd_simulate(args) -> int:
    config = load_config(args.config, base_seed=_env_int(SEED_ENV))
    workers = args.workers if args.workers is not None else _env_int(WORKERS_ENV)
    ensemble = run_ensemble(config, workers=workers)
    manifest = write_run(ensemble, args.out)
    print(f"wrote {Path(args.out) / 'trajectories.csv'} ({config.n_traj} trajectories, "
          f"{config.n_records} records each) hash {manifest['content_hash']}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analysis import analyze

    acfg = load_analysis_config(args.analysis)
    ensemble = load_run(args.run)
    report = analyze(ensemble, acfg)
    report["content_hash"] = ensemble.meta.get("content_hash")
    out = Path(args.run) / ANALYSIS
    write_json(report, out)
    print(f"classification: {report['classification']} ({out})")
    return EXIT_OK


def cmd_report(args) -> int:
    from .analysis import make_figure

    ensemble = load_run(args.run)
    for path in make_figure(ensemble, args.figure, args.run):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewdiff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an ensemble and write trajectories.csv + manifest.json")
    p.add_argument("--config", required=True, help="sectioned key = value run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help=f"worker threads (default: ${WORKERS_ENV} or CPU count)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="write analysis.json for a simulate output directory")
    p.add_argument("--run", required=True)
    p.add_argument("--analysis", default=None, help="optional [analysis] settings file")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="write plot-data files for a figure")
    p.add_argument("--run", required=True)
    p.add_argument("--figure", required=True, choices=["fig1", "fig2", "fig3", "fig4"])
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
