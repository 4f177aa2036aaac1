"""Monte-Carlo localization experiments and RMSE bounds from scenario files.

    rssiloc run   --scenario fig3 --trials 1000 --seed 42 --out results.csv --histograms hist/
    rssiloc sweep --scenario fig3 --sigma-p 1 2 3 --out results.csv
    rssiloc crlb  --scenario ring --sigma-p 1 2 4

``--scenario`` takes a path or the name of a bundled scenario.  Results go
to ``--out`` (CSV) or standard output.  On failure a JSON summary is written
to standard error and the exit status is non-zero:

    1  bad scenario document or option value
    2  command-line usage error (from argparse)
    3  output could not be written
    4  some cells failed (the others are still written)
"""

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .exceptions import RssilocError
from .files import (
    histogram_filename,
    load_scenario,
    write_histogram,
    write_results_csv,
)
from .simulator import run_monte_carlo, scenario_crlb

DEFAULT_SEED = 1
DEFAULT_TRIALS = 1000

EXIT_INPUT = 1
EXIT_OUTPUT = 3
EXIT_CELLS = 4


class _Failure(Exception):
    def __init__(self, code, summary):
        super().__init__(summary.get("message", ""))
        self.code = code
        self.summary = summary


def _error_summary(command, kind, message, **extra):
    out = {"status": "error", "command": command, "error": kind, "message": message}
    out.update(extra)
    return out


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _build_parser():
    parser = argparse.ArgumentParser(prog="rssiloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file or bundled name (e.g. fig3)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--out", type=Path, help="write CSV here instead of standard output")

    for name, help_text in (("run", "Monte-Carlo comparison at the file's noise levels"),
                            ("sweep", "Monte-Carlo comparison at explicit RSSI noise levels")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--trials", type=_positive_int, default=DEFAULT_TRIALS, help=f"paired trials per cell (default {DEFAULT_TRIALS})")
        p.add_argument("--histograms", type=Path, metavar="DIR", help="write per-cell error histograms here")
        p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument(
            "--sigma-p", type=float, nargs="+", required=(name == "sweep"), metavar="DBM",
            help="RSSI noise levels, replacing the file's list",
        )

    p = sub.add_parser("crlb", help="RMSE lower bound per RSSI noise level")
    common(p)
    p.add_argument("--sigma-p", type=float, nargs="+", metavar="DBM", help="RSSI noise levels (default: the file's list)")
    p.add_argument("--per-trial", action="store_true", help="average the bound over sampled layouts (random scenarios)")
    p.add_argument("--trials", type=_positive_int, default=DEFAULT_TRIALS, help="layouts to average with --per-trial")
    return parser


def _load(command, spec):
    try:
        return load_scenario(spec)
    except RssilocError as exc:
        raise _Failure(EXIT_INPUT, _error_summary(command, type(exc).__name__, str(exc))) from exc


def _write_text(command, path, write):
    if path is None:
        write(sys.stdout)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write(fh)
    except OSError as exc:
        raise _Failure(EXIT_OUTPUT, _error_summary(command, "OSError", str(exc), path=str(path))) from exc


def _cmd_run(args):
    scenario = _load(args.command, args.scenario)
    values = args.sigma_p if args.sigma_p else list(scenario.noise.sigma_p_values)
    bad = [v for v in values if not (v >= 0 and math.isfinite(v))]
    if bad:
        raise _Failure(EXIT_INPUT, _error_summary(args.command, "DomainError", f"sigma_p must be >= 0, got {bad}"))

    table, failures = {}, []
    for cell, sp in enumerate(values):
        try:
            table[float(sp)] = run_monte_carlo(
                scenario.with_sigma_p(sp), args.trials, args.seed, cell=cell, workers=args.workers
            )
        except RssilocError as exc:
            failures.append({"sigma_p_dbm": sp, "error": type(exc).__name__, "message": str(exc)})

    _write_text(args.command, args.out, lambda fh: write_results_csv(fh, scenario.id, table, args.seed))

    if args.histograms is not None:
        try:
            args.histograms.mkdir(parents=True, exist_ok=True)
            for sp, stats in table.items():
                for alg, a in stats.algorithms.items():
                    write_histogram(args.histograms / histogram_filename(scenario.id, alg, sp), a.hist_edges, a.hist_counts)
        except OSError as exc:
            raise _Failure(EXIT_OUTPUT, _error_summary(args.command, "OSError", str(exc))) from exc

    if failures:
        raise _Failure(
            EXIT_CELLS,
            _error_summary(args.command, "CellFailure", f"{len(failures)} of {len(values)} cells failed", cells=failures),
        )


def _cmd_crlb(args):
    scenario = _load(args.command, args.scenario)
    values = args.sigma_p if args.sigma_p else list(scenario.noise.sigma_p_values)
    if not scenario.is_fixed and not args.per_trial:
        raise _Failure(
            EXIT_INPUT,
            _error_summary(
                args.command,
                "DomainError",
                "the scenario draws random layouts, so the bound depends on the trial; pass --per-trial to average it",
            ),
        )
    if any(not v > 0 for v in values):
        raise _Failure(
            EXIT_INPUT,
            _error_summary(
                args.command,
                "DomainError",
                "the bound needs sigma_p > 0: with noiseless RSSI the Fisher information is infinite",
                sigma_p=values,
            ),
        )
    sa = [scenario.noise.sigma_a, *(s for _, s in scenario.noise.regions)]
    if any(not s > 0 for s in sa):
        raise _Failure(
            EXIT_INPUT,
            _error_summary(
                args.command,
                "DomainError",
                "the bound needs sigma_a > 0 for every anchor; use a tiny value (e.g. 1e-6 m) for near-exact anchors",
            ),
        )

    rows = []
    for cell, sp in enumerate(values):
        try:
            bound = scenario_crlb(
                scenario, sigma_p=sp, n_layouts=None if scenario.is_fixed else args.trials, master_seed=args.seed, cell=cell
            )
        except RssilocError as exc:
            raise _Failure(
                EXIT_CELLS, _error_summary(args.command, type(exc).__name__, str(exc), sigma_p_dbm=sp)
            ) from exc
        rows.append((sp, bound))

    def write(fh):
        fh.write("scenario_id,sigma_p_dbm,crlb_m\n")
        for sp, bound in rows:
            fh.write(f"{scenario.id},{sp:.6g},{'' if bound is None else format(bound, '.6g')}\n")

    _write_text(args.command, args.out, write)
    if args.out is not None:
        write(sys.stdout)


def main(argv=None):
    """Entry point; returns the process exit status."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = _cmd_crlb if args.command == "crlb" else _cmd_run
    try:
        handler(args)
    except _Failure as f:
        print(json.dumps(f.summary, sort_keys=True), file=sys.stderr)
        return f.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
