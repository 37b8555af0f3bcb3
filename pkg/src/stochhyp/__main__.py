"""Command line: ``python -m stochhyp {run,list,validate,report}``.

Exit codes: 0 every invariant passes, 1 an invariant failed (or a stage
aborted), 2 bad input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from .runner import StageError, read_invariants, run_scenario
from .scenarios import ScenarioError, list_scenarios, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _load(path: str, args):
    spec = load_scenario(path)
    return spec.with_overrides(base_seed=args.seed, n_paths=args.paths, n_cells=args.cells)


def cmd_run(args) -> int:
    spec = _load(args.scenario, args)
    out_dir = Path(args.out_dir) if args.out_dir else Path("runs") / spec.name
    try:
        report = run_scenario(spec, out_dir, dump_flows=args.dump_flows)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for inv in report.invariants:
        print(inv.line())
    print(f"outputs in {out_dir}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_list(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        entries = list_scenarios(args.scenario_dir)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    width = max(len(e.name) for e in entries)
    for e in entries:
        origin = "" if e.source == "preset" else f"  [{e.source}]"
        print(f"{e.name:<{width}}  {e.description}{origin}")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _load(args.scenario, args)
    print(f"{spec.name}: valid")
    print(spec.to_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "invariants.csv").exists():
        print(f"error: {run_dir} holds no run outputs", file=sys.stderr)
        return EXIT_INPUT
    invariants = read_invariants(run_dir)
    for inv in invariants:
        print(inv.line())
    failed = [inv.name for inv in invariants if inv.passed is False]
    print("all invariants pass" if not failed else f"failed: {', '.join(failed)}")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m stochhyp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log pipeline stages")
    sub = parser.add_subparsers(dest="verb", required=True)

    overrides = argparse.ArgumentParser(add_help=False)
    overrides.add_argument("--seed", type=int, help="override noise.base_seed")
    overrides.add_argument("--paths", type=int, help="override noise.n_paths")
    overrides.add_argument("--cells", type=int, help="override grid.n_cells")

    p = sub.add_parser("run", parents=[overrides], help="run a scenario file or preset name")
    p.add_argument("scenario")
    p.add_argument("--out-dir", help="output directory (default runs/<name>)")
    p.add_argument("--dump-flows", action="store_true", help="write per-path flow CSVs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list", help="list presets and user scenarios")
    p.add_argument("--scenario-dir", help="user scenario directory")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("validate", parents=[overrides], help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="summarize the invariants of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: cannot read {exc.filename or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
