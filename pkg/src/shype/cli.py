"""Command-line entry point: ``shype <subcommand> ...``.

Exit codes: 0 success, 1 model error, 2 I/O error, 3 simulation failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

from .experiments import BatchError, Observable, SweepSpec, export, gnuplot_script, run_batch, sweep
from .flatten import flatten
from .lang import HypeSyntaxError, load_model, render
from .model import ModelError
from .opportunet import (
    SCENARIOS, build_ferry_network, case_observables, read_scenario, scenario_t_end,
)
from .sim import IntegratorError, SimConfig, SimulationError, simulate

DEFAULT_SEED = 1729
EXIT_OK, EXIT_MODEL, EXIT_IO, EXIT_RUNTIME = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def default_seed() -> int:
    env = os.environ.get("SHYPE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"SHYPE_SEED must be an integer, got {env!r}", EXIT_MODEL) from None
    return DEFAULT_SEED


def _read(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _load(path):
    return load_model(_read(path))


def _params(pairs):
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise CliError(f"--param expects NAME=VALUE, got {p!r}", EXIT_MODEL)
        k, v = p.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _config(args, **kw) -> SimConfig:
    return SimConfig(rtol=args.rtol, atol=args.atol, **kw)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {path}: {exc.strerror}", EXIT_IO) from None
    return path


def _observables(model, specs):
    """``NAME=VAR[+VAR...]`` specs, or every continuous variable at the end."""
    if not specs:
        return [Observable.final(v, v) for v in model.variables]
    out = []
    for s in specs:
        name, _, expr = s.partition("=")
        vars_ = [v.strip() for v in (expr or name).split("+")]
        missing = [v for v in vars_ if v not in model.variables]
        if missing:
            raise CliError(f"unknown variable(s) in observable {name}: {missing}", EXIT_MODEL)
        out.append(Observable.final(name.strip(), vars_))
    return out


def _write_summary(path, result):
    rows = [["observable", "n", "mean", "sd", "ci_lo", "ci_hi"]]
    for name in result.observables:
        s = result[name]
        lo, hi = s.ci
        rows.append([name, s.n] + [repr(float(v)) for v in (s.mean, s.sd, lo, hi)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args):
    model = _load(args.model)
    flat = flatten(model)
    for w in flat.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{args.model}: ok ({len(model.variables)} variables, {len(model.events)} events, "
          f"{len(flat.subs)} subcomponents, {len(flat.cons)} sequential controllers)")


def cmd_render(args):
    if args.scenario:
        text = render(build_ferry_network(read_scenario(args.model)))
    else:
        text = render(_load(args.model))
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc.strerror}", EXIT_IO) from None
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    model = _load(args.model)
    flat = flatten(model, _params(args.param))
    cfg = _config(args, output_step=args.output_step)
    traj = simulate(flat, args.t_end, seed=args.seed, config=cfg)
    out = _outdir(args.out)
    try:
        traj.to_csv(os.path.join(out, "trajectory.csv"), os.path.join(out, "events.csv"))
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc.strerror}", EXIT_IO) from None
    fired = sum(1 for e in traj.events if e.name != "init")
    print(f"events fired: {fired}; wall time: {traj.wall_time:.3f} s")


def cmd_batch(args):
    model = _load(args.model)
    flat = flatten(model, _params(args.param))
    obs = _observables(model, args.observable)
    res = run_batch(flat, args.runs, args.seed, obs, args.t_end, _config(args), args.jobs)
    out = _outdir(args.out)
    _write_summary(os.path.join(out, "summary.csv"), res)
    for name in res.observables:
        s = res[name]
        print(f"{name}: mean {s.mean:.6g} +- {s.halfwidth:.6g} (n={s.n})")


def cmd_sweep(args):
    model = _load(args.model)
    obs = _observables(model, args.observable)
    values = [float(v) for v in args.values.replace(",", " ").split()]
    spec = SweepSpec(args.parameter, values, args.runs, args.seed, obs)
    table = sweep(model, spec, args.t_end, _config(args), args.jobs, series=model.name,
                  params=_params(args.param))
    paths = export(table, _outdir(args.out))
    print("wrote " + ", ".join(paths))


def cmd_casestudy(args):
    base = read_scenario(args.scenario)
    seed = args.seed if args.seed_given else base.seed
    out = _outdir(args.out)
    experiments = args.experiments.split(",") if args.experiments else list(base.experiments)
    scenarios = args.scenarios.split(",") if args.scenarios else list(SCENARIOS)
    cfg = _config(args)
    plans = {"mtc": ("mtc_min", base.mtc_values, base.runs, {"ferry_mb": base.ferry_mb}),
             "buffer": ("ferry_mb", base.buffer_values, base.buffer_runs,
                        {"mtc_min": base.mtc_min})}
    for exp in experiments:
        if exp not in plans:
            raise CliError(f"unknown experiment {exp!r}; expected mtc or buffer", EXIT_MODEL)
        param, values, runs, fixed = plans[exp]
        runs = args.runs or runs
        tables = []
        for sc in scenarios:
            spec = base.with_(scenario=sc, **fixed)
            model = build_ferry_network(spec)
            sspec = SweepSpec(param, values, runs, seed, case_observables(spec))
            t_end = ((lambda v, s=spec: scenario_t_end(s, v)) if param == "ferry_mb"
                     else scenario_t_end(spec))
            start = time.perf_counter()
            tb = sweep(model, sspec, t_end, cfg, args.jobs, series=sc)
            wall = [w for r in tb.results for w in r.wall_times]
            print(f"{exp} {sc}: {len(wall)} runs in {time.perf_counter() - start:.1f} s "
                  f"(mean {sum(wall) / len(wall):.3f} s/run)")
            tables.append(tb)
        names = ["total_dropped", "total_collected", "total_delivered", "total_generated"]
        paths = export(tables, out, names, prefix=f"{exp}_")
        xlabel = "mean time to contact (min)" if exp == "mtc" else "ferry buffer (MB)"
        for name in ("total_dropped", "total_collected"):
            script = gnuplot_script(f"{exp}_{name}.csv", scenarios, xlabel, f"{name} (MB)")
            with open(os.path.join(out, f"{exp}_{name}.gp"), "w", encoding="utf-8",
                      newline="") as fh:
                fh.write(script)
        print("wrote " + ", ".join(os.path.basename(p) for p in paths))


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shype", description="Stochastic HYPE modelling and simulation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs=False, t_end=True):
        sp.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default: $SHYPE_SEED or {DEFAULT_SEED})")
        if t_end:
            sp.add_argument("--t-end", type=float, default=100.0, dest="t_end")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--rtol", type=float, default=1e-6)
        sp.add_argument("--atol", type=float, default=1e-9)
        sp.add_argument("--format", choices=["csv"], default="csv")
        if runs:
            sp.add_argument("--runs", type=int, default=None)
            sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("validate", help="parse, elaborate and validate a .hype file")
    sp.add_argument("model")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("render", help="print the canonical .hype text of a model")
    sp.add_argument("model", help=".hype file, or scenario file with --scenario")
    sp.add_argument("--scenario", action="store_true", help="input is a case-study scenario file")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("simulate", help="one run; writes trajectory.csv and events.csv")
    sp.add_argument("model")
    common(sp)
    sp.add_argument("--output-step", type=float, default=None, dest="output_step")
    sp.add_argument("--param", action="append", help="override a parameter, NAME=VALUE")
    sp.set_defaults(func=cmd_simulate)

    for name, func in (("batch", cmd_batch), ("sweep", cmd_sweep)):
        sp = sub.add_parser(name, help=f"{name} of runs with summary statistics")
        sp.add_argument("model")
        common(sp, runs=True)
        sp.add_argument("--observable", action="append",
                        help="NAME=VAR[+VAR...] read at t_end (default: every variable)")
        sp.add_argument("--param", action="append", help="override a parameter, NAME=VALUE")
        if name == "sweep":
            sp.add_argument("--parameter", required=True)
            sp.add_argument("--values", required=True, help="comma separated")
        sp.set_defaults(func=func)

    sp = sub.add_parser("casestudy", help="ferry study sweeps from a scenario file")
    sp.add_argument("scenario")
    common(sp, runs=True, t_end=False)
    sp.add_argument("--experiments", default=None, help="mtc,buffer")
    sp.add_argument("--scenarios", default=None, help="subset of raer,raef,rtbr,rtbf")
    sp.set_defaults(func=cmd_casestudy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "seed"):
            args.seed_given = args.seed is not None
            if args.seed is None:
                args.seed = default_seed()
        if getattr(args, "runs", 0) is None and args.command != "casestudy":
            args.runs = 1
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (HypeSyntaxError, ModelError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", ()):
            print(f"  {v}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SimulationError, IntegratorError, BatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
