"""Command-line entry point: ``pkfilter {simulate,filter,compare,estimate}``.

Every flag may also be given in a plain ``key = value`` file passed with
``--config``; keys are flag names with or without leading dashes, and flags
on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import rng as rngs
from .dmf import DEFAULT_PARTICLES, dmf_filter, filtered_variance, write_ensembles
from .ekf import ekf_filter
from .ga import GaConfig, ParamSpace
from .harness import ExperimentConfig, run_estimation_study, run_filter_comparison, write_csv
from .loss import FilterKind
from .model import (
    DEFAULT_C0,
    DEFAULT_PARAMS,
    DEFAULT_Q0,
    DEFAULT_TIMES,
    PARAM_NAMES,
    TimeGrid,
    read_observations,
    simulate_trajectory,
)


def parse_params(text: str | None):
    """``"v_max=1.2,k_m=14"`` -> default parameters with those fields replaced."""
    if not text:
        return DEFAULT_PARAMS
    changes = {}
    for item in text.split(","):
        name, _, value = item.partition("=")
        name = name.strip()
        if name not in PARAM_NAMES:
            raise argparse.ArgumentTypeError(f"unknown parameter {name!r}")
        changes[name] = float(value)
    return DEFAULT_PARAMS.with_(**changes)


def parse_times(text: str | None) -> TimeGrid:
    if not text:
        return TimeGrid(DEFAULT_TIMES)
    return TimeGrid(tuple(float(t) for t in text.split(",")))


def read_config_file(path: str | Path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SystemExit(f"{path}:{lineno}: expected key = value")
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file mirroring the flags")
    p.add_argument("--params", help="comma-separated overrides, e.g. v_max=1,k_m=15")
    p.add_argument("--times", help="comma-separated observation times (min)")
    p.add_argument("--q0", type=float, default=DEFAULT_Q0)
    p.add_argument("--c0", type=float, default=DEFAULT_C0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pkfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory and write t,q,c")
    _common(p)

    p = sub.add_parser("filter", help="filter observations from a t,c[,q] CSV")
    _common(p)
    p.add_argument("observations", help="CSV with columns t,c and optionally q")
    p.add_argument("--filter", choices=[k.value for k in FilterKind], default="dmf")
    p.add_argument("--particles", type=int, default=DEFAULT_PARTICLES)
    p.add_argument("--dump-ensemble", help="write step,particle_index,q,weight for the DMF")

    p = sub.add_parser("compare", help="MAE quantiles of DMF vs EKF over replicates")
    _common(p)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--particles", type=int, default=DEFAULT_PARTICLES)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("estimate", help="GA parameter estimation study")
    _common(p)
    p.add_argument("--filter", choices=["dmf", "ekf", "both"], default="both")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--particles", type=int, default=DEFAULT_PARTICLES, help="particles inside the loss")
    p.add_argument("--temperature", type=float, default=0.75)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pop-size", type=int, default=100)
    p.add_argument("--max-loops", type=int, default=100)
    p.add_argument("--ec-threshold", type=float, default=1e-5)
    p.add_argument("--m-replicates", type=int, default=100)
    p.add_argument("--bounds-file", help="CSV name,lower,upper; default [truth/10, truth*10]")
    p.add_argument("--workers", type=int, default=1)
    parser.commands = sub.choices
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        file_values = read_config_file(args.config)
        subparser = parser.commands[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(file_values) - known
        if unknown:
            parser.error(f"{args.config}: unknown keys {sorted(unknown)}")
        # re-parse so that command-line flags override the file
        subparser.set_defaults(**file_values)
        args = parser.parse_args(argv)
    try:
        parse_params(args.params)
        parse_times(args.times)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        parser.error(str(exc))
    return args


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        params_true=parse_params(args.params),
        grid=parse_times(args.times),
        q0=args.q0,
        c0=args.c0,
        replicates=args.replicates,
        seed=args.seed,
        workers=args.workers,
    )


def cmd_simulate(args) -> None:
    rng = rngs.substream(args.seed, 0, rngs.SIMULATION)
    traj = simulate_trajectory(parse_params(args.params), parse_times(args.times), rng, args.q0, args.c0)
    traj.to_csv(args.out or sys.stdout)


def cmd_filter(args) -> None:
    grid, obs, c0, q_true = read_observations(args.observations)
    p = parse_params(args.params)
    if args.filter == "ekf":
        states = ekf_filter(obs, grid, p, args.q0, c0)
        q_filt = [s.q_filt for s in states]
        sigma = [s.sigma_filt for s in states]
    else:
        steps = dmf_filter(obs, grid, p, rngs.substream(args.seed, 0, rngs.DMF), args.q0, c0, args.particles)
        q_filt = [est for est, _ in steps]
        sigma = [filtered_variance(e) for _, e in steps]
        if args.dump_ensemble:
            write_ensembles(args.dump_ensemble, [e for _, e in steps])

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        header = ["t", "q_true", "q_filt", "sigma_filt"] if q_true is not None else ["t", "q_filt", "sigma_filt"]
        writer.writerow(header)
        for k, t in enumerate(grid.times):
            row = [t, q_filt[k], sigma[k]]
            if q_true is not None:
                row.insert(1, q_true[k])
            writer.writerow([repr(float(x)) for x in row])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_compare(args) -> None:
    cfg = _experiment_config(args)
    cfg.n_particles = args.particles
    result = run_filter_comparison(cfg)
    write_csv(result, args.out, sys.stdout)
    print(f"excluded replicates: {result.excluded}", file=sys.stderr)


def cmd_estimate(args) -> None:
    cfg = _experiment_config(args)
    cfg.filters = tuple(FilterKind) if args.filter == "both" else (FilterKind(args.filter),)
    cfg.ga = GaConfig(
        pop_size=args.pop_size,
        alpha=args.alpha,
        temperature=args.temperature,
        max_loops=args.max_loops,
        ec_threshold=args.ec_threshold,
    )
    cfg.m_replicates = args.m_replicates
    cfg.loss_particles = args.particles
    cfg.space = ParamSpace.from_csv(args.bounds_file) if args.bounds_file else ParamSpace.around(cfg.params_true)
    result = run_estimation_study(cfg)
    write_csv(result, args.out, sys.stdout)
    for kind, value in result.maep.items():
        print(f"MAEP {kind.value}: {value:.4f}", file=sys.stderr)
    print(f"excluded replicates: {result.excluded}", file=sys.stderr)


COMMANDS = {"simulate": cmd_simulate, "filter": cmd_filter, "compare": cmd_compare, "estimate": cmd_estimate}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(int(args.verbose), 2), format="%(levelname)s %(name)s: %(message)s")
    COMMANDS[args.command](args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
