"""Command-line entry point: ``dcqe synth | run | report | selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .collaboration import CollaborationError
from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_report,
    load_summary,
    run_experiment,
    summary_to_records,
    SUMMARY_COLUMNS,
)
from .tabular import DataError, SyntheticConfig, generate_synthetic, save_schema, write_csv

log = logging.getLogger("dcqe")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def cmd_synth(args) -> int:
    d = _read_json(args.config)
    cfg = SyntheticConfig.from_dict(d.get("synthetic", d))
    pop = generate_synthetic(cfg)
    write_csv(pop, args.out)
    save_schema(pop.schema, str(args.out) + ".schema.json")
    log.info("wrote %d rows x %d covariates to %s", pop.n, pop.m, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    if args.print_defaults:
        print(json.dumps(ExperimentConfig().to_dict(), indent=2))
        return EXIT_OK
    if not args.config or not args.out_dir:
        raise ConfigError("run needs --config and --out-dir (or --print-defaults)")
    cfg = ExperimentConfig.from_dict(_read_json(args.config))
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.free_dims:
        overrides["free_dims"] = True
    if args.partition_once:
        overrides["partition_once"] = True
    if args.anchor_target:
        overrides["anchor_target"] = args.anchor_target
    if args.unsafe_export_reducer:
        overrides["unsafe_export_reducer"] = True
    cfg = replace(cfg, **overrides)
    report = run_experiment(cfg)
    for path in emit_report(report, args.out_dir, args.format):
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = load_summary(args.input)
    if args.format == "json":
        print(json.dumps(summary_to_records(rows), indent=2))
    else:
        print(",".join(SUMMARY_COLUMNS))
        for r in rows:
            vals = ["" if v is None else repr(v) if isinstance(v, float) else str(v) for v in (r.arm, r.metric, r.value, r.se, r.n_replicates)]
            print(",".join(vals))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcqe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic population to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run a bootstrap experiment")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--free-dims", action="store_true")
    p.add_argument("--partition-once", action="store_true")
    p.add_argument("--anchor-target", choices=("unscaled", "scaled"))
    p.add_argument("--unsafe-export-reducer", action="store_true", help="debug only: dump replicate-0 reducers")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--print-defaults", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="print a summary from a run directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, KeyError, TypeError) as exc:
        print(f"dcqe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError, CollaborationError) as exc:
        print(f"dcqe: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
