"""Command-line driver: ``r3puf {run,trace,baseline,check}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .campaign import (
    CampaignConfig,
    ConfigError,
    acceptance_checks,
    baseline_comparison,
    cell_trace,
    load_config,
    parse_cell_ref,
    run_campaign,
    write_outputs,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DEGENERATE = 2
EXIT_CHECK_FAILED = 3

log = logging.getLogger("r3puf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="r3puf", description="R3PUF cell simulator and PUF metrics")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML campaign file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    run = sub.add_parser("run", help="run a campaign and write report files")
    check = sub.add_parser("check", help="run a campaign and gate on acceptance thresholds")
    for p in (run, check):
        common(p)
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--trace", action="append", default=[], metavar="CHIP:CELL",
                       help="also export this cell's trace (repeatable)")
    run.add_argument("--check", action="store_true", help="exit 3 if an acceptance threshold fails")

    trace = sub.add_parser("trace", help="export one cell's extraction and readout waveform")
    common(trace)
    trace.add_argument("--trace", action="append", required=True, metavar="CHIP:CELL")
    trace.add_argument("--epoch", type=int, default=0)

    baseline = sub.add_parser("baseline", help="median-split baseline on the sampled devices")
    common(baseline)
    return parser


def _config(args) -> CampaignConfig:
    config = load_config(args.config) if args.config else CampaignConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    traces = [parse_cell_ref(t) for t in getattr(args, "trace", [])]
    if traces and args.command != "trace":
        changes["trace_cells"] = tuple(dict.fromkeys(config.trace_cells + tuple(traces)))
    return replace(config, **changes) if changes else config


def _cmd_run(args, config) -> int:
    result = run_campaign(config, jobs=args.jobs, write=False)
    if config.output_dir:
        write_outputs(result, config.output_dir)
    else:
        sys.stdout.write(result.to_json())
    status = EXIT_OK
    if result.degenerate_cells:
        for c, i, e, s in result.degenerate_cells:
            log.error("degenerate cell: chip %d cell %d epoch %d: %s", c, i, e, s)
        status = EXIT_DEGENERATE
    if args.command == "check" or getattr(args, "check", False):
        for chk in acceptance_checks(result):
            print(f"{'PASS' if chk.passed else 'FAIL'} {chk.name}: {chk.value} (target {chk.target})",
                  file=sys.stderr)
            if not chk.passed and status == EXIT_OK:
                status = EXIT_CHECK_FAILED
    return status


def _cmd_trace(args, config) -> int:
    out = Path(config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    header = {"config_hash": config.content_hash(), "master_seed": config.master_seed}
    for ref in args.trace:
        chip, cell = parse_cell_ref(ref)
        if not (0 <= chip < config.chips and 0 <= cell < config.cells_per_chip):
            raise ConfigError(f"trace cell {ref} is outside the campaign")
        path = out / f"trace_{chip}_{cell}.csv"
        write_trace_csv(cell_trace(config, chip, cell, args.epoch), path, header)
        log.info("wrote %s", path)
    return EXIT_OK


def _cmd_baseline(args, config) -> int:
    doc = json.dumps(baseline_comparison(config), sort_keys=True, indent=2) + "\n"
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "baseline.json").write_text(doc)
    else:
        sys.stdout.write(doc)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _config(args)
        handler = {"run": _cmd_run, "check": _cmd_run, "trace": _cmd_trace, "baseline": _cmd_baseline}
        return handler[args.command](args, config)
    except ConfigError as exc:
        print(f"r3puf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
