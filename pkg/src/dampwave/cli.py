"""Command line entry point: ``dampwave run | report | list-experiments``.

Exit codes: 0 success, 1 a gated check failed, 2 configuration error,
3 a sweep sample was not stable under grid refinement.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import DESCRIPTIONS, ConfigError, load_config
from .resolvent import WORKERS_ENV, UnresolvedGridError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNRESOLVED = 0, 1, 2, 3


def cmd_run(args) -> int:
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg, args.output)
    except UnresolvedGridError as exc:
        print(f"unresolved grid: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def _fmt(value, spec: str = ".4f") -> str:
    return "-" if value is None else format(value, spec)


def collect_summaries(directory: Path) -> list[tuple[Path, dict]]:
    found = []
    for path in sorted(directory.rglob("summary.json")):
        with open(path) as fh:
            found.append((path, json.load(fh)))
    return found


def cmd_report(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        print(f"report: no such directory {directory}", file=sys.stderr)
        return EXIT_CONFIG
    rows = collect_summaries(directory)
    header = f"{'experiment':<14} {'gamma':>6} {'measured':>10} {'target':>10} {'|delta|':>9}  verdict"
    print(header)
    print("-" * len(header))
    failed = False
    for path, s in rows:
        verdict = "pass" if s.get("passed") else "FAIL"
        failed |= not s.get("passed")
        gamma = s.get("gamma")
        print(f"{s.get('experiment', '?'):<14} {_fmt(gamma, '.2f'):>6} {_fmt(s.get('measured_exponent')):>10} "
              f"{_fmt(s.get('target_exponent')):>10} {_fmt(s.get('delta')):>9}  {verdict}"
              + ("" if len(rows) == 1 else f"  ({path.parent.relative_to(directory) or '.'})"))
    return EXIT_FAIL if failed else EXIT_OK


def cmd_list(args) -> int:
    for kind, text in DESCRIPTIONS.items():
        print(f"{kind:<14} {text}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dampwave", description=__doc__.splitlines()[0],
                                     epilog=f"Set {WORKERS_ENV} to the number of worker processes for sweeps.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="override output.dir")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="tabulate summaries found under a directory")
    rep.add_argument("directory")
    rep.set_defaults(func=cmd_report)
    lst = sub.add_parser("list-experiments", help="list experiment kinds")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
