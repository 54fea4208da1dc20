"""Command-line front end.

Subcommands: ``estimate``, ``sweep``, ``oracle``, ``levels`` and ``model``.
Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .gs import ExtinctionError, SplittingSchedule, pilot_levels
from .harness import (METHODS, ExperimentConfig, pilot_rng, run, sweep, write_csv, write_gnuplot,
                      write_json)
from .maxflow import max_flow
from .network import ModelError, ParametricFamily, builtin, dump_model, load_model, normalize_levels
from .oracle import exact_unreliability
from .phasetype import PrecisionError

# version tag of every JSON document written by the CLI
SCHEMA_VERSION = "1.0"

# benchmark settings used when a builtin is requested without explicit values
DEFAULTS = {
    "lattice": {"rho": 0.6, "b": 8, "demand": 10},
    "dodecahedron": {"rho": 0.7, "b": 4, "demand": 5},
}
DEFAULT_EPSILON = 1e-4


class UsageError(Exception):
    pass


def _model_args(p: argparse.ArgumentParser, multi_eps: bool = False):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", metavar="PATH", help="model JSON file")
    src.add_argument("--builtin", metavar="NAME[:k]",
                     help="benchmark network: dodecahedron, lattice or lattice:k")
    if multi_eps:
        p.add_argument("--epsilon", metavar="E[,E...]", default=None,
                       help="comma-separated epsilon values")
    else:
        p.add_argument("--epsilon", type=float, default=None,
                       help=f"rarity parameter of a builtin (default {DEFAULT_EPSILON:g})")
    p.add_argument("--rho", type=float, default=None, help="decay ratio of a builtin")
    p.add_argument("--b", type=int, default=None, help="top capacity level of a builtin")
    p.add_argument("--demand", type=int, default=None, help="demand (overrides a model file)")


def _out_args(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", metavar="PATH", help="write here instead of stdout")


def _run_args(p: argparse.ArgumentParser):
    p.add_argument("--method", choices=METHODS, default="pmc")
    p.add_argument("--n", type=int, default=50_000, help="replications (default 50000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nu", type=int, default=5, help="FilterAll period (default 5)")
    p.add_argument("--levels", metavar="PATH", help="GS schedule file from `levels`")
    p.add_argument("--s", type=int, default=2, help="GS splitting factor (default 2)")
    p.add_argument("--n0", type=int, default=500, help="GS pilot size (default 500)")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stochflow",
        description="Unreliability of stochastic flow networks by PMC and generalized splitting.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("estimate", help="estimate the unreliability of one model")
    _model_args(p)
    _run_args(p)
    _out_args(p)
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")

    p = sub.add_parser("sweep", help="estimate over a list of epsilon values")
    _model_args(p, multi_eps=True)
    _run_args(p)
    _out_args(p)
    p.add_argument("--gnuplot", metavar="PATH", help="also write a gnuplot data file")

    p = sub.add_parser("oracle", help="exact unreliability by full enumeration")
    _model_args(p)
    p.add_argument("--max-states", type=int, default=10**7)
    _out_args(p)

    p = sub.add_parser("levels", help="run the GS pilot and save its levels")
    _model_args(p)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--n0", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="schedule file (stdout if omitted)")

    p = sub.add_parser("model", help="write a model as JSON, optionally its residual graph")
    _model_args(p)
    p.add_argument("--normalize", action="store_true", help="cap levels at the demand")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--dot", metavar="PATH",
                   help="DOT dump of the residual graph of a max flow at top capacities")
    return ap


def _family(args, name: str, eps: float) -> ParametricFamily:
    d = DEFAULTS[name]
    rho = d["rho"] if args.rho is None else args.rho
    b = d["b"] if args.b is None else args.b
    return ParametricFamily(rho, eps, b)


def _builtin_key(spec: str) -> str:
    key = spec.partition(":")[0].strip().lower()
    if key not in DEFAULTS:
        raise ModelError(f"unknown builtin network {spec!r}")
    return key


def _model_factory(args):
    """``eps -> model`` plus the default epsilon list."""
    if args.model:
        if args.epsilon is not None or args.rho is not None or args.b is not None:
            raise UsageError("--epsilon, --rho and --b only apply to --builtin")
        model = load_model(args.model)
        if args.demand is not None:
            model = model.with_demand(args.demand)
        return (lambda eps: model), [None]
    key = _builtin_key(args.builtin)
    demand = DEFAULTS[key]["demand"] if args.demand is None else args.demand
    return (lambda eps: builtin(args.builtin, _family(args, key, eps), demand)), None


def _single_model(args):
    make, default = _model_factory(args)
    if default is not None:
        return make(None), None
    eps = DEFAULT_EPSILON if args.epsilon is None else args.epsilon
    return make(eps), eps


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args, epsilons=()) -> ExperimentConfig:
    schedule = SplittingSchedule.load(args.levels) if args.levels else None
    if schedule is not None and args.method != "gs":
        raise UsageError("--levels only applies to --method gs")
    return ExperimentConfig(args.method, args.n, args.seed, args.nu, args.s, args.n0, schedule,
                            tuple(epsilons), args.threads)


def _progress(done, n):
    sys.stderr.write(f"\r{done}/{n} replications")
    if done == n:
        sys.stderr.write("\n")
    sys.stderr.flush()


def _report(summaries, args):
    if args.format == "csv":
        return write_csv(summaries)
    return write_json(summaries, extra={"spec_version": SCHEMA_VERSION})


def cmd_estimate(args):
    model, eps = _single_model(args)
    cfg = _config(args)
    res = run(cfg, model, epsilon=eps, progress=None if args.quiet else _progress)
    _emit(_report([res], args), args.out)


def cmd_sweep(args):
    make, default = _model_factory(args)
    if default is not None:
        if args.epsilon is not None:
            raise UsageError("--epsilon only applies to --builtin")
        epsilons = default
    else:
        text = args.epsilon if args.epsilon is not None else repr(DEFAULT_EPSILON)
        try:
            epsilons = [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"bad epsilon list {text!r}") from None
    cfg = _config(args, [e for e in epsilons if e is not None])
    results = sweep(cfg, make, epsilons)
    _emit(_report(results, args), args.out)
    if args.gnuplot:
        write_gnuplot(results, args.gnuplot)


def cmd_oracle(args):
    model, eps = _single_model(args)
    res = exact_unreliability(normalize_levels(model), args.max_states)
    if args.format == "csv":
        text = f"u,states,failing_states\n{res.u!r},{res.states},{res.failing_states}\n"
    else:
        text = json.dumps({"spec_version": SCHEMA_VERSION, "u": float(f"{res.u:.17g}"),
                           "u_text": f"{res.u:.17g}", "states": res.states,
                           "failing_states": res.failing_states,
                           "model_digest": model.digest(), "epsilon": eps},
                          indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)


def cmd_levels(args):
    model, eps = _single_model(args)
    rng = pilot_rng(args.seed)
    sched = pilot_levels(normalize_levels(model), None, args.s, args.n0, rng, seed=args.seed)
    doc = {"spec_version": SCHEMA_VERSION, **sched.to_dict(), "tau": sched.tau,
           "model_digest": normalize_levels(model).digest(), "epsilon": eps}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)


def cmd_model(args):
    model, _ = _single_model(args)
    if args.normalize:
        model = normalize_levels(model)
    _emit(dump_model(model), args.out)
    if args.dot:
        Path(args.dot).write_text(max_flow(model, model.top_capacities()).to_dot())


COMMANDS = {"estimate": cmd_estimate, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "levels": cmd_levels, "model": cmd_model}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"stochflow {args.command}: error: {e}\n")
        return 2
    except (ModelError, ExtinctionError, PrecisionError, ValueError, OSError, KeyError) as e:
        sys.stderr.write(f"stochflow {args.command}: {e}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
