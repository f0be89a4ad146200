"""Command line entry point.

Subcommands: simulate, filter, calibrate, radius, saddle, lintest,
experiment.  Each reads a JSON config plus flag overrides, writes output
atomically (never leaving partial files), and exits 0 on success, 1 on
a validation error, 2 on a numerical failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import diagnostics, experiment, minimax, models, plots, rls, serialize
from .errors import NumericalError, ValidationError
from .kalman import covariance_path


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; route through the
    # validation path so the exit-code contract holds
    def error(self, message):
        raise ValidationError(message)


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args.handler(args)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def _build_parser():
    parser = _Parser(prog="robustkf",
                     description="robust state-space filtering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, data=False, config=True):
        cmd = sub.add_parser(name, help=help_)
        if config:
            cmd.add_argument("--config", required=True, help="JSON config path")
        if data:
            cmd.add_argument("--data", required=True, help="input CSV path")
        cmd.add_argument("--out", help="output path (stdout when omitted)")
        cmd.add_argument("--format", choices=("csv", "json"), default=None)
        return cmd

    cmd = add("simulate", "simulate a trajectory, optionally contaminated")
    cmd.add_argument("--seed", type=int, default=None)
    cmd.set_defaults(handler=_cmd_simulate)

    cmd = add("filter", "run a filter over a trajectory CSV", data=True)
    cmd.set_defaults(handler=_cmd_filter)

    cmd = add("calibrate", "solve for the clipping height at one step")
    cmd.add_argument("--r", type=float, default=None, help="contamination radius")
    cmd.add_argument("--delta", type=float, default=None, help="efficiency loss")
    cmd.add_argument("--io", action="store_true", help="calibrate the IO residual clip")
    cmd.add_argument("--t", type=int, default=1, help="filter step (default 1)")
    cmd.set_defaults(handler=_cmd_calibrate)

    cmd = add("radius", "least-favorable radius over an interval")
    cmd.add_argument("--r-low", type=float, required=True)
    cmd.add_argument("--r-high", type=float, required=True)
    cmd.add_argument("--t", type=int, default=1)
    cmd.set_defaults(handler=_cmd_radius)

    cmd = add("saddle", "worst-case contamination at one step")
    cmd.add_argument("--r", type=float, required=True)
    cmd.add_argument("--t", type=int, default=1)
    cmd.add_argument("--io", action="store_true", help="state-side variant")
    cmd.add_argument("--trace-density", default=None,
                     help="also write a density trace CSV (and PNG) here")
    cmd.add_argument("--grid-n", type=int, default=241)
    cmd.add_argument("--grid-span", type=float, default=6.0,
                     help="trace half-width in observation sd units")
    cmd.add_argument("--no-plot", action="store_true")
    cmd.set_defaults(handler=_cmd_saddle)

    cmd = add("lintest", "third-moment Gaussianity test on increments",
              data=True, config=False)
    cmd.add_argument("--alpha", type=float, default=0.05)
    cmd.set_defaults(handler=_cmd_lintest)

    cmd = add("experiment", "run a Monte Carlo filter comparison")
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--no-plot", action="store_true")
    cmd.set_defaults(handler=_cmd_experiment)

    return parser


def _emit(args, obj, rows, default_format):
    fmt = args.format or default_format
    if fmt == "json":
        text = json.dumps(serialize.sanitize(obj), indent=2, sort_keys=True) + "\n"
    else:
        text = serialize.csv_text(rows)
    if args.out:
        serialize.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _model_from(cfg):
    if "model" not in cfg:
        raise ValidationError("missing key 'model'", field="config")
    return models.ModelSpec.from_dict(cfg["model"])


def _cmd_simulate(args):
    cfg = serialize.read_json(args.config)
    model = _model_from(cfg)
    T = int(cfg.get("horizon", 0))
    if T < 1:
        raise ValidationError("need horizon >= 1", field="horizon")
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ValidationError("seed required (config key or --seed)", field="seed")
    traj = models.simulate_ideal(model, T, seed)
    if cfg.get("contamination") is not None:
        spec = models.ContaminationSpec.from_dict(cfg["contamination"])
        traj = models.contaminate(model, traj, spec, seed)
    obj = {"T": traj.T, "seed": traj.seed, "x": traj.x.tolist(),
           "y": traj.y.tolist(), "hits": traj.hits.tolist()}
    _emit(args, obj, traj.csv_rows(), default_format="csv")


def _cmd_filter(args):
    cfg = serialize.read_json(args.config)
    model = _model_from(cfg)
    if "filter" not in cfg:
        raise ValidationError("missing key 'filter'", field="config")
    fspec = experiment.FilterSpec.from_dict(cfg["filter"], where="filter")
    traj = models.Trajectory.from_csv(args.data)
    path = covariance_path(model, traj.T)
    bs, record = experiment._calibrate_filter(fspec, model, path, where="filter")
    states = rls.filter_trajectory(model, traj.y, fspec.method, bs)

    def rows():
        yield (["t"] + [f"xhat_{i+1}" for i in range(model.p)] + ["trace_sigma", "b"])
        for st in states:
            b = "" if bs is None or st.t == 0 else bs[st.t - 1]
            yield ([st.t] + list(st.x_filt) + [float(np.trace(st.Sigma_filt)), b])

    obj = {"method": fspec.method,
           "b": None if bs is None else [float(b) for b in bs],
           "calibration": record,
           "states": [{"t": st.t, "x_filt": st.x_filt.tolist(),
                       "trace_sigma": float(np.trace(st.Sigma_filt))}
                      for st in states]}
    _emit(args, obj, rows(), default_format="csv")


def _step_stats(model, t):
    if t < 1:
        raise ValidationError("step t must be >= 1", field="t")
    path = covariance_path(model, t)
    return path, path["gain"][t - 1], path["Delta"][t - 1]


def _cmd_calibrate(args):
    cfg = serialize.read_json(args.config)
    model = _model_from(cfg)
    if (args.r is None) == (args.delta is None):
        raise ValidationError("give exactly one of --r or --delta")
    if args.io and args.delta is not None:
        raise ValidationError("--io calibrates by radius; use --r")
    path, gain, Delta = _step_stats(model, args.t)
    if args.io:
        cal = rls.calibrate_b_io(gain, model.Z_at(args.t), Delta, args.r)
    elif args.r is not None:
        cal = rls.calibrate_b_radius(gain, Delta, args.r)
    else:
        trace = float(np.trace(path["Sigma_filt"][args.t]))
        cal = rls.calibrate_b_delta(gain, Delta, trace, args.delta)
    obj = {**cal.to_dict(), "t": args.t, "io": bool(args.io)}

    def rows():
        keys = ["b", "method", "parameter", "residual", "t", "io"]
        yield keys
        yield [obj[k] if obj[k] is not None else "" for k in keys]

    _emit(args, obj, rows(), default_format="json")


def _cmd_radius(args):
    cfg = serialize.read_json(args.config)
    model = _model_from(cfg)
    ideal = minimax.IdealPair.from_model(model, args.t)
    sol = minimax.solve_least_favorable_radius(args.r_low, args.r_high, ideal)
    obj = {**sol.to_dict(), "t": args.t}
    A_l = sol.A_table[0]
    B_u = sol.B_table[-1]

    def rows():
        yield ["r", "A_r", "B_r", "inefficiency"]
        for r, a, b in zip(sol.grid, sol.A_table, sol.B_table):
            ineff = max(a / A_l, b / B_u) if B_u > 0 else a / A_l
            yield [r, a, b, ineff]

    _emit(args, obj, rows(), default_format="json")


def _cmd_saddle(args):
    cfg = serialize.read_json(args.config)
    model = _model_from(cfg)
    ideal = minimax.IdealPair.from_model(model, args.t)
    sp = minimax.io_saddle(ideal, args.r) if args.io else minimax.solve_rho(ideal, args.r)
    obj = {**sp.to_dict(), "t": args.t}

    def rows():
        yield ["r", "rho", "risk", "normalization_residual", "kind", "t"]
        yield [sp.r, sp.rho, sp.risk, sp.normalization_residual, sp.kind, args.t]

    _emit(args, obj, rows(), default_format="json")

    if args.trace_density:
        if args.io:
            raise ValidationError("density traces apply to the observation-side "
                                  "saddle; drop --io")
        if model.q != 1:
            raise ValidationError("density traces need a scalar observation")
        sigma_y = math.sqrt(float(ideal.Delta[0, 0]))
        center = float(ideal.EY[0])
        grid = np.linspace(center - args.grid_span * sigma_y,
                           center + args.grid_span * sigma_y, args.grid_n)
        trace = minimax.density_trace(sp, ideal, grid)
        table = [["y", "p_id", "p_re", "p_di"]]
        table += [[trace["y"][i], trace["p_id"][i], trace["p_re"][i], trace["p_di"][i]]
                  for i in range(grid.size)]
        serialize.write_csv(args.trace_density, table)
        if not args.no_plot:
            fig = plots.density_figure(trace, r=args.r)
            plots.save_figure(fig, os.path.splitext(args.trace_density)[0] + ".png")


def _cmd_lintest(args):
    data = _read_numeric_csv(args.data)
    res = diagnostics.linearity_test(data, alpha=args.alpha)
    obj = res.to_dict()

    def rows():
        keys = ["n", "T_n", "sigma_hat", "alpha", "critical", "reject"]
        yield keys
        yield [obj[k] for k in keys]

    _emit(args, obj, rows(), default_format="json")


def _read_numeric_csv(path):
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except FileNotFoundError:
        raise ValidationError(f"data file not found: {path}")
    if not lines:
        raise ValidationError("data file is empty", field=str(path))
    rows = []
    for i, ln in enumerate(lines):
        cells = ln.split(",")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            if i == 0:
                continue  # header line
            raise ValidationError(f"non-numeric value on line {i + 1}", field=str(path))
    if not rows:
        raise ValidationError("no numeric rows", field=str(path))
    return np.asarray(rows)


def _cmd_experiment(args):
    cfg = serialize.read_json(args.config)
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    config = experiment.ExperimentConfig.from_dict(cfg)
    report = experiment.run_experiment(config)
    obj = report.to_dict()
    if args.out:
        base = os.path.splitext(args.out)[0] if args.out.endswith((".csv", ".json")) \
            else args.out
        serialize.write_json(base + ".json", obj)
        serialize.write_csv(base + ".csv", report.csv_rows())
        if not args.no_plot:
            plots.save_figure(plots.mse_figure(obj), base + ".png")
    else:
        _emit(args, obj, report.csv_rows(), default_format="json")


if __name__ == "__main__":
    sys.exit(main())
