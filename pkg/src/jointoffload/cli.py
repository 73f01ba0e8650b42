"""Command line entry point.

Exit codes: 0 success, 2 invalid input, 3 no feasible partition at all.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .backward import bi_optimize
from .experiments import (
    Scenario,
    draw_gains,
    emit_csv,
    format_rows,
    format_value,
    load_scenario,
    run_bi_comparison,
    run_distance_sweep,
    run_feasible_fraction,
    run_nmax_sweep,
    shipped_path,
)
from .graph import GraphError, load_call_graph
from .search import feasible_fraction, optimize
from .single_solver import INFEASIBLE, InfeasibleError

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _gains(text: str) -> np.ndarray:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"gains must be comma-separated numbers, got {text!r}")
    return np.array(values)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", help="call graph file (JSON)")
    common.add_argument("--scenario", help="scenario file, or the name of a shipped scenario")
    common.add_argument("--mode", choices=("single", "multi"))
    common.add_argument("--channels", type=_positive_int, help="number of subchannels K")
    common.add_argument("--gains", type=_gains, help="explicit normalized gains a1,a2,...")
    common.add_argument("--seed", type=_u64)
    common.add_argument("--trials", type=_positive_int)
    common.add_argument("--workers", type=_positive_int, default=1)
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--format", choices=("csv", "pretty"), default="csv")

    parser = _Parser(prog="jointoffload", description="Joint offloading and radio allocation.")
    verbs = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    solve = verbs.add_parser("solve", parents=[common], help="optimal partition for one channel state")
    solve.add_argument("--method", choices=("exhaustive", "bi"), default="exhaustive")
    verbs.add_parser("sweep-distance", parents=[common], help="mean energy versus distance")
    verbs.add_parser("sweep-nmax", parents=[common], help="mean energy versus maximum state size")
    verbs.add_parser("compare-bi", parents=[common], help="backward induction against exhaustive search")
    verbs.add_parser("feasible-fraction", parents=[common], help="share of feasible partitions")
    return parser


def _scenario(args) -> Scenario:
    graph = load_call_graph(args.graph) if args.graph else None
    if args.scenario:
        path = Path(args.scenario)
        if not path.exists():
            path = shipped_path(args.scenario)
        s = load_scenario(path, graph=graph)
    elif graph is not None:
        s = Scenario(graph=graph)
    else:
        raise ValueError("give --graph or --scenario")
    channels = args.channels
    if channels is None and args.gains is not None:
        channels = len(args.gains)
    mode = args.mode
    if mode is None and channels is not None and channels > 1:
        mode = "multi"
    return s.with_overrides(mode=mode, subchannels=channels, seed=args.seed, trials=args.trials)


def _channel(args, s: Scenario) -> np.ndarray:
    if args.gains is not None:
        if len(args.gains) != s.subchannels:
            raise ValueError(f"{len(args.gains)} gains given for {s.subchannels} subchannels")
        return args.gains
    return draw_gains(s, 0, s.radio, s.fading)


def _write(text: str, args) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _solve_text(report, gains, fmt: str) -> str:
    best = report.best
    if fmt == "pretty":
        lines = [f"status: {report.status}",
                 f"gains: {', '.join(f'{a:.6g}' for a in gains)}"]
        if best is not None:
            lines += [f"remote: {report.assignment}",
                      f"energy_j: {best.total_energy_j:.9g}",
                      f"delay_s: {best.total_delay_s:.9g}"]
            for key, p in best.power_w.items():
                p = np.atleast_1d(p)
                b = np.atleast_1d(best.bits_per_symbol[key])
                lines.append(f"edge {key[0]}->{key[1]}: power_w [{', '.join(f'{x:.6g}' for x in p)}]"
                             f"  bits_per_symbol [{', '.join(f'{x:.6g}' for x in b)}]")
        lines.append(f"partitions feasible: {report.feasible_count}/{report.total_count}")
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "edge", "subchannel", "value"])
    w.writerow(["status", "", "", report.status])
    for k, a in enumerate(gains):
        w.writerow(["gain", "", k, format_value(float(a))])
    w.writerow(["feasible_count", "", "", report.feasible_count])
    w.writerow(["total_count", "", "", report.total_count])
    if best is not None:
        w.writerow(["remote", "", "", ";".join(sorted(report.assignment.remote))])
        w.writerow(["energy_j", "", "", format_value(best.total_energy_j)])
        w.writerow(["delay_s", "", "", format_value(best.total_delay_s)])
        for key, p in best.power_w.items():
            edge = f"{key[0]}->{key[1]}"
            for k, (pk, bk) in enumerate(zip(np.atleast_1d(p), np.atleast_1d(best.bits_per_symbol[key]))):
                w.writerow(["power_w", edge, k, format_value(float(pk))])
                w.writerow(["bits_per_symbol", edge, k, format_value(float(bk))])
    return buf.getvalue()


def _cmd_solve(args) -> int:
    s = _scenario(args)
    gains = _channel(args, s)
    cc = s.compute_for(s.graph)
    if args.method == "bi":
        report = bi_optimize(s.graph, gains, s.radio, cc, s.mode)
    else:
        report = optimize(s.graph, gains, s.radio, cc, s.mode)
    _write(_solve_text(report, gains, args.format), args)
    return EXIT_INFEASIBLE if report.status == INFEASIBLE else EXIT_OK


def _emit_rows(rows, args) -> int:
    if args.format == "pretty":
        _write(format_rows(rows), args)
    elif args.out:
        emit_csv(rows, args.out)
    else:
        emit_csv(rows, sys.stdout)
    return EXIT_INFEASIBLE if all(r.trials_used == 0 for r in rows) else EXIT_OK


def _sweep(runner):
    def command(args) -> int:
        if not args.scenario:
            raise ValueError("this command needs --scenario")
        if args.gains is not None:
            raise ValueError("--gains fixes one channel state; sweeps draw their own")
        return _emit_rows(runner(_scenario(args), workers=args.workers), args)
    return command


def _cmd_feasible_fraction(args) -> int:
    if args.gains is None:
        return _sweep(run_feasible_fraction)(args)
    s = _scenario(args)
    gains = _channel(args, s)
    value = feasible_fraction(s.graph, gains, s.radio, s.compute_for(s.graph), s.mode)
    _write(f"feasible_fraction\n{format_value(value)}\n" if args.format == "csv"
           else f"feasible fraction: {value:.6g}\n", args)
    return EXIT_OK if value > 0 else EXIT_INFEASIBLE


COMMANDS = {
    "solve": _cmd_solve,
    "sweep-distance": _sweep(run_distance_sweep),
    "sweep-nmax": _sweep(run_nmax_sweep),
    "compare-bi": _sweep(run_bi_comparison),
    "feasible-fraction": _cmd_feasible_fraction,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
