"""photonstats command line: simulate, analyze, report.

Exit codes: 0 success, 1 configuration error / missing inputs / failed
analysis stage, 2 I/O or tag-format error.
"""
import argparse
import logging
from pathlib import Path
import sys
from typing import List, Optional

from photonstats.config import environment, load_config
from photonstats.errors import ConfigError, MissingInputError, PhotonStatsError, TagFormatError
from photonstats.pipeline import load_report, run_analysis, simulate_to_file
from photonstats.report import render_table

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


def _config_arg(args):
    return args.config or args.preset


def cmd_simulate(args) -> int:
    config = load_config(_config_arg(args))
    summary = simulate_to_file(config, args.out, threads=environment().threads)
    print(f"✅ wrote {summary['tag_count']} tags to {summary['tags_path']} "
          f"({summary['mean_rate_per_ms']:.1f} counts/ms over {summary['duration_s']:g} s)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = load_config(_config_arg(args))
    log = run_analysis(args.tags, config, args.outdir, threads=environment().threads)
    for name, entry in log.stages.items():
        mark = "✅" if entry["status"] == "completed" else "❌"
        detail = f" ({entry['error']}: {entry['message']})" if "error" in entry else ""
        print(f"{mark} {name}: {entry['status']}{detail}")
    if log.failed:
        print(f"analysis incomplete, failed stages: {', '.join(log.failed)}", file=sys.stderr)
        return EXIT_USAGE
    print(render_table([(config.name, load_report(args.outdir))]), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = [(Path(d).name, load_report(d)) for d in args.dir]
    print(render_table(rows), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonstats", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_config(sub):
        group = sub.add_mutually_exclusive_group(required=True)
        group.add_argument("--config", help="YAML run configuration")
        group.add_argument("--preset", help="named preset under config/ (dr1, dr2, poisson)")

    simulate = commands.add_parser("simulate", help="write a simulated time-tag file")
    add_config(simulate)
    simulate.add_argument("--out", required=True, help="output tag file (.ttag binary or .csv)")
    simulate.set_defaults(handler=cmd_simulate)

    analyze = commands.add_parser("analyze", help="run the full analysis on a tag file")
    analyze.add_argument("--tags", required=True)
    add_config(analyze)
    analyze.add_argument("--outdir", required=True)
    analyze.set_defaults(handler=cmd_analyze)

    report = commands.add_parser("report", help="print a yield table from analysis directories")
    report.add_argument("--dir", action="append", required=True, help="analysis directory (repeatable)")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MissingInputError as e:
        print(f"missing input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TagFormatError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except PhotonStatsError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
