"""``cgdplan`` command line: plan, bench, ablate, export-traj.

Exit codes: 0 success, 1 invalid input (flags, files, schema), 2 failure while running.
"""
import argparse
import csv
import os
import sys

import numpy as np

from . import bspline, metrics, planner, scenario_io
from .denoiser import WeightFileError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
TRAJ_COLUMNS = ("t", "x", "y", "z", "yaw", "vx", "vy", "vz", "ax", "ay", "az", "jx", "jy", "jz")
SUMMARY_COLUMNS = ("grid", "label", "enable", "activation", "n", "mean_cost", "collision_pct",
                   "violation_pct", "module_calls", "mean_wall_ms", "report")


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _add_common(p, needs_predictor=True):
    p.add_argument("--suite", required=True, help="scenario suite (YAML)")
    if needs_predictor:
        p.add_argument("--predictor", required=True,
                       help="surrogate:interpolate | surrogate:multimodal | weights:<path>")
    p.add_argument("--rollouts", type=int, default=8, help="rollouts per scenario (default 8)")
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    p.add_argument("--enable", default="all",
                   help="comma list of goal,tf,collision,qp; 'all' or 'none' (default all)")
    p.add_argument("--activate-at", default="",
                   help="comma list module=step, e.g. goal=3,tf=3")
    p.add_argument("--workers", type=int, default=1, help="threads for parallel rollouts")


def build_parser():
    parser = _Parser(prog="cgdplan", description="Constraint-guided diffusion trajectory planner.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="plan one scenario and print a summary")
    _add_common(p)
    p.add_argument("--scenario", required=True, help="scenario id within the suite")
    p.add_argument("--out", help="write the best trajectory as CSV")
    p.add_argument("--rate", type=float, default=100.0, help="export rate in Hz (default 100)")

    p = sub.add_parser("bench", help="plan every scenario in a suite and write a report")
    _add_common(p)
    p.add_argument("--out", required=True, help="report path")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="report format (default from extension, else csv)")
    p.add_argument("--timing", action="store_true",
                   help="record wall_ms; off by default so reports are reproducible byte for byte")

    p = sub.add_parser("ablate", help="run ablation grids declared in the suite")
    _add_common(p)
    p.add_argument("--grid", action="append",
                   help="grid name from the suite's ablations (repeatable; default all)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--timing", action="store_true", help="record wall_ms")

    p = sub.add_parser("export-traj", help="write every rollout of one plan as CSV")
    _add_common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=100.0)
    return parser


def parse_enable(text):
    text = text.strip().lower()
    if text in ("all", ""):
        return frozenset(planner.MODULES)
    if text == "none":
        return frozenset()
    try:
        return frozenset(planner.module_name(m) for m in text.split(",") if m.strip())
    except ValueError as exc:
        raise InvalidInput(f"--enable: {exc}") from None


def parse_activation(text):
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, sep, step = item.partition("=")
        if not sep:
            raise InvalidInput(f"--activate-at: expected module=step, got {item!r}")
        try:
            out.append((planner.module_name(name), int(step)))
        except ValueError as exc:
            raise InvalidInput(f"--activate-at: {exc}") from None
    return tuple(out)


def make_config(args, enable=None, activation=None):
    if args.rollouts < 1:
        raise InvalidInput("--rollouts must be >= 1")
    if args.workers < 1:
        raise InvalidInput("--workers must be >= 1")
    try:
        return planner.PlannerConfig(
            n_rollouts=args.rollouts, root_seed=args.seed, workers=args.workers,
            enable=parse_enable(args.enable) if enable is None else enable,
            activation=parse_activation(args.activate_at) if activation is None else activation)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None


def load_inputs(args, config):
    if not os.path.isfile(args.suite):
        raise InvalidInput(f"--suite: no such file {args.suite!r}")
    try:
        suite = scenario_io.read_suite(args.suite)
    except scenario_io.SuiteError as exc:
        raise InvalidInput(str(exc)) from None
    spec = getattr(args, "predictor", None)
    kind, _, arg = (spec or "").partition(":")
    if kind == "weights" and arg and not os.path.isfile(arg):
        raise InvalidInput(f"--predictor: no such weight file {arg!r}")
    try:
        predictor = planner.make_predictor(spec, config)
    except (ValueError, WeightFileError) as exc:
        raise InvalidInput(f"--predictor: {exc}") from None
    return suite, predictor


def _scenario(suite, scenario_id):
    try:
        return suite.find(scenario_id)
    except KeyError as exc:
        raise InvalidInput(f"--scenario: {exc.args[0]}") from None


def _scenario_seed(seed, index):
    """Per-scenario entropy: the root seed words followed by the scenario index."""
    words = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return tuple(words) + (index,)


def run_suite(scenarios, predictor, config, timing=False):
    """One report row per scenario (best rollout), plus total module calls."""
    rows, calls = [], 0
    for i, sc in enumerate(scenarios):
        res = planner.plan(sc, predictor, planner.replace(config, root_seed=_scenario_seed(config.root_seed, i)))
        best = res.best_rollout
        rows.append(scenario_io.ReportRow(sc.id, best.cost, best.collided, best.dyn_violation,
                                          res.wall_ms if timing else 0.0))
        calls += res.module_calls
    return scenario_io.SuiteReport(rows), calls


def trajectory_rows(spline, rate):
    times = metrics.sample_times(spline.t_f, rate)
    cols = [times[:, None], bspline.sample(spline, times, 0), bspline.sample_yaw(spline, times, 0)[:, None]]
    cols += [bspline.sample(spline, times, k) for k in (1, 2, 3)]
    return np.hstack(cols)


def _write_traj(path, header, blocks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for prefix, arr in blocks:
            for row in arr:
                w.writerow(list(prefix) + [repr(float(v)) for v in row])


def _row_line(row):
    return ",".join([row.id, repr(float(row.cost)), str(int(row.collided)),
                     repr(float(row.dyn_violation)), repr(float(row.wall_ms))])


def cmd_plan(args):
    config = make_config(args)
    suite, predictor = load_inputs(args, config)
    sc = _scenario(suite, args.scenario)
    if not args.rate > 0:
        raise InvalidInput("--rate must be positive")
    res = planner.plan(sc, predictor, config)
    best = res.best_rollout
    row = scenario_io.ReportRow(sc.id, best.cost, best.collided, best.dyn_violation, res.wall_ms)
    print(",".join(scenario_io.REPORT_COLUMNS))
    print(_row_line(row))
    print(f"# best_rollout={res.best_index} safe={int(res.best_safe)} t_f={best.spline.t_f!r} "
          f"rollouts={len(res.rollouts)}")
    if args.out:
        _write_traj(args.out, TRAJ_COLUMNS, [((), trajectory_rows(res.best, args.rate))])
    return EXIT_OK


def _report_format(args):
    if args.format:
        return args.format
    return "json" if args.out.endswith(".json") else "csv"


def cmd_bench(args):
    config = make_config(args)
    suite, predictor = load_inputs(args, config)
    report, _ = run_suite(suite.scenarios, predictor, config, args.timing)
    scenario_io.write_report(report, args.out, _report_format(args))
    if report.rows:
        print(scenario_io.format_aggregate(report.aggregate()))
    else:
        print("# empty suite")
    return EXIT_OK


def _label_activation(activation):
    return ";".join(f"{m}={s}" for m, s in activation)


def cmd_ablate(args):
    base = make_config(args)
    suite, predictor = load_inputs(args, base)
    grids = suite.ablations
    names = args.grid or sorted(grids)
    if not names:
        raise InvalidInput("--grid: the suite declares no ablations")
    plans = {}
    for name in names:
        if name not in grids:
            raise InvalidInput(f"--grid: unknown grid {name!r}; suite has {sorted(grids)}")
        try:
            plans[name] = planner.expand_ablation(grids[name], base.schedule.n_steps)
        except (ValueError, TypeError, AttributeError) as exc:
            raise InvalidInput(f"ablations.{name}: {exc}") from None
    os.makedirs(args.out, exist_ok=True)
    summary = []
    for name in names:
        for label, enable, activation in plans[name]:
            cfg = planner.replace(base, enable=enable, activation=activation)
            report, calls = run_suite(suite.scenarios, predictor, cfg, args.timing)
            fname = f"{name}__{label}.{args.format}"
            scenario_io.write_report(report, os.path.join(args.out, fname), args.format)
            agg = report.aggregate()
            summary.append([name, label, "+".join(sorted(enable)), _label_activation(activation),
                            agg["n"], repr(agg["mean_cost"]), repr(agg["collision_pct"]),
                            repr(agg["violation_pct"]), calls, repr(agg["mean_wall_ms"]), fname])
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(summary)
    for row in summary:
        print(f"{row[0]:>12} {row[1]:<28} cost={float(row[5]):10.3f} coll%={row[6]:>5} "
              f"viol%={row[7]:>5} calls={row[8]}")
    return EXIT_OK


def cmd_export(args):
    config = make_config(args)
    suite, predictor = load_inputs(args, config)
    sc = _scenario(suite, args.scenario)
    if not args.rate > 0:
        raise InvalidInput("--rate must be positive")
    res = planner.plan(sc, predictor, config)
    blocks = [((r.index, int(r.index == res.best_index)), trajectory_rows(r.spline, args.rate))
              for r in res.rollouts]
    _write_traj(args.out, ("rollout", "best") + TRAJ_COLUMNS, blocks)
    print(f"# wrote {len(blocks)} rollouts to {args.out}")
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "bench": cmd_bench, "ablate": cmd_ablate, "export-traj": cmd_export}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvalidInput as exc:
        print(f"cgdplan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"cgdplan: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
