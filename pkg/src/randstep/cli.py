"""Command-line frontend: solver sweeps, diagnostics, and figure tables.

Every subcommand echoes its resolved configuration before computing,
writes CSV (and optionally an SVG chart) and exits 0 on success, 1 on
usage errors, 2 on numerical failures.  The environment variable
RANDSTEP_SEED overrides --seed when set.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, problems, report
from .harness import ErrorMode, ExperimentSpec
from .ode_solver import NonConvergence, StepRestrictionViolated, StepScheme
from .rand_nodes import DEFAULT_MASTER_SEED

SEED_ENV_VAR = "RANDSTEP_SEED"


class _Parser(argparse.ArgumentParser):
    # usage errors must exit with code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_range(text: str) -> tuple[int, ...]:
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return tuple(range(lo, hi + 1))


def _parse_schemes(text: str) -> tuple[StepScheme, ...]:
    try:
        return tuple(StepScheme.parse(tok) for tok in text.split(","))
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _add_common(sub, pde: bool = False):
    sub.add_argument(
        "--seed",
        type=int,
        default=DEFAULT_MASTER_SEED,
        help=f"master seed (default {DEFAULT_MASTER_SEED}; "
        f"env {SEED_ENV_VAR} overrides)",
    )
    sub.add_argument(
        "--workers",
        type=int,
        default=harness.default_workers(),
        help="parallel replica workers (default: available cores)",
    )
    sub.add_argument(
        "--error-mode",
        choices=["final", "max"],
        default="final",
        help="error functional for rate fits and plots (default final)",
    )
    sub.add_argument("--out", required=True, help="output CSV path")
    sub.add_argument("--svg", default=None, help="optional SVG chart path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="randstep",
        description="Randomized implicit time stepping benchmarks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    ode = subs.add_parser("ode", parents=[], help="ODE Monte Carlo sweep")
    ode.add_argument(
        "--problem",
        required=True,
        choices=["prothero-robinson", "time-integral"],
    )
    ode.add_argument("--scheme", required=True, type=_parse_schemes,
                     help="comma list from rbe,be,rfe")
    ode.add_argument("--lambda", dest="lam", type=float, default=2.0,
                     help="stiffness parameter (default 2)")
    ode.add_argument("--K", type=int, default=10,
                     help="sawtooth exponent, half period 2^-K (default 10)")
    ode.add_argument("--n", required=True, type=_parse_range,
                     help="step exponents lo:hi, k = 2^-n")
    ode.add_argument("--mc", type=int, default=200,
                     help="Monte Carlo replicas (default 200)")
    _add_common(ode)

    pde = subs.add_parser("pde", help="PDE Monte Carlo sweep")
    pde.add_argument("--problem", required=True, choices=["semilinear-heat"])
    pde.add_argument("--scheme", required=True, type=_parse_schemes,
                     help="comma list from rbe,be")
    pde.add_argument("--K", type=int, default=7,
                     help="oscillation exponent, half period 2^-K (default 7)")
    pde.add_argument("--R", type=float, default=10.0,
                     help="truncation cap of the nonlinearity (default 10)")
    pde.add_argument("--ptilde", type=float, default=4.0,
                     help="power of the nonlinearity (default 4)")
    pde.add_argument("--dof", type=int, default=127,
                     help="interior degrees of freedom (default 127)")
    pde.add_argument("--n", required=True, type=_parse_range,
                     help="step exponents lo:hi, k = 2^-n")
    pde.add_argument("--mc", type=int, default=50,
                     help="Monte Carlo replicas (default 50)")
    _add_common(pde)

    res = subs.add_parser("residual", help="local-residual scaling study")
    res.add_argument("--lambda", dest="lam", type=float, default=2.0,
                     help="stiffness parameter (default 2)")
    res.add_argument("--K", type=int, default=8,
                     help="sawtooth exponent (default 8)")
    res.add_argument("--n", required=True, type=_parse_range,
                     help="step exponents lo:hi")
    res.add_argument("--mc", type=int, default=1000,
                     help="Monte Carlo replicas (default 1000)")
    res.add_argument("--seed", type=int, default=DEFAULT_MASTER_SEED,
                     help=f"master seed (default {DEFAULT_MASTER_SEED}; "
                     f"env {SEED_ENV_VAR} overrides)")
    res.add_argument("--out", required=True, help="output CSV path")

    rates = subs.add_parser("rates", help="fit a convergence rate from a CSV")
    rates.add_argument("--in", dest="table", required=True,
                       help="error-table CSV produced by ode/pde/fig*")
    rates.add_argument("--scheme", required=True, help="scheme token to fit")
    rates.add_argument("--window", required=True, type=_parse_range,
                       help="exponent window lo:hi")
    rates.add_argument("--error-mode", choices=["final", "max"], default="final")
    rates.add_argument("--out", required=True, help="output CSV path")

    for name, help_text in (
        ("fig1-left", "stiff sawtooth sweep, lambda=2 (rbe vs be)"),
        ("fig1-right", "dissipative sweep, lambda=-1000 (rbe vs rfe)"),
        ("fig2", "semilinear heat sweep (rbe vs be)"),
    ):
        fig = subs.add_parser(name, help=help_text)
        fig.add_argument("--scale", choices=["desk", "paper"], default="desk",
                         help="desk: reduced grids and replica counts (minutes); "
                         "paper: full-size grids and replica counts (slow)")
        fig.add_argument("--rates-out", default=None,
                         help="optional rate-fit CSV path")
        _add_common(fig)

    return parser


def _resolve_seed(args) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"randstep: error: {SEED_ENV_VAR}={env!r} is not an integer")
    return args.seed


def _echo(config: dict) -> None:
    print("config:", " ".join(f"{k}={v}" for k, v in config.items()), flush=True)


def _write_outputs(table, args, fits=None):
    harness.write_error_csv(table, args.out)
    print(f"wrote {args.out}")
    rates_out = getattr(args, "rates_out", None)
    if rates_out and fits is not None:
        harness.write_rate_csv(fits, rates_out)
        print(f"wrote {rates_out}")
    if args.svg:
        mode = ErrorMode(args.error_mode)
        report.emit_svg_loglog(table, args.svg, mode)
        print(f"wrote {args.svg}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1

    try:
        return _dispatch(args)
    except (NonConvergence, StepRestrictionViolated, harness.ExperimentError) as err:
        print(f"randstep: numerical failure: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"randstep: error: {err}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    command = args.command

    if command == "ode":
        seed = _resolve_seed(args)
        spec = ExperimentSpec(
            problem=args.problem,
            schemes=args.scheme,
            step_exponents=args.n,
            mc_replicas=args.mc,
            master_seed=seed,
            lam=args.lam,
            sawtooth_exponent=args.K,
            error_mode=ErrorMode(args.error_mode),
        )
        _echo(
            dict(problem=args.problem, scheme=",".join(s.token for s in args.scheme),
                 lam=args.lam, K=args.K, n=f"{args.n[0]}:{args.n[-1]}", mc=args.mc,
                 seed=seed, error_mode=args.error_mode, workers=args.workers)
        )
        table = harness.run_mc(spec, workers=args.workers)
        _write_outputs(table, args)
        return 0

    if command == "pde":
        seed = _resolve_seed(args)
        spec = ExperimentSpec(
            problem=args.problem,
            schemes=args.scheme,
            step_exponents=args.n,
            mc_replicas=args.mc,
            master_seed=seed,
            sawtooth_exponent=args.K,
            cap=args.R,
            power=args.ptilde,
            mesh_dof=args.dof,
            error_mode=ErrorMode(args.error_mode),
        )
        _echo(
            dict(problem=args.problem, scheme=",".join(s.token for s in args.scheme),
                 K=args.K, R=args.R, ptilde=args.ptilde, dof=args.dof,
                 n=f"{args.n[0]}:{args.n[-1]}", mc=args.mc, seed=seed,
                 error_mode=args.error_mode, workers=args.workers)
        )
        table = harness.run_mc(spec, workers=args.workers)
        _write_outputs(table, args)
        return 0

    if command == "residual":
        seed = _resolve_seed(args)
        _echo(dict(problem="prothero-robinson", lam=args.lam, K=args.K,
                   n=f"{args.n[0]}:{args.n[-1]}", mc=args.mc, seed=seed))
        saw = problems.SawtoothSpec(args.K, problems.AmplitudeMode.ODE)
        problem = problems.prothero_robinson_problem(
            problems.ProtheroRobinsonSpec(args.lam, saw)
        )
        rows = harness.residual_study(problem, args.K, args.n, args.mc, seed)
        harness.write_residual_csv(rows, args.out)
        print(f"wrote {args.out}")
        return 0

    if command == "rates":
        _echo(dict(table=args.table, scheme=args.scheme,
                   window=f"{args.window[0]}:{args.window[-1]}",
                   error_mode=args.error_mode))
        table = harness.read_error_csv(args.table)
        fit = harness.fit_rate(
            table,
            args.scheme,
            (args.window[0], args.window[-1]),
            ErrorMode(args.error_mode),
        )
        harness.write_rate_csv({(args.scheme, "window"): fit}, args.out)
        print(
            f"scheme {args.scheme}: slope {fit.slope:.4f} over "
            f"n in {fit.window[0]}..{fit.window[1]} (residual {fit.residual:.3g})"
        )
        print(f"wrote {args.out}")
        return 0

    seed = _resolve_seed(args)
    _echo(dict(figure=command, scale=args.scale, seed=seed,
               error_mode=args.error_mode, workers=args.workers))
    if command == "fig1-left":
        table, fits = harness.reproduce_fig1_left(args.scale, seed, args.workers)
    elif command == "fig1-right":
        table, summary = harness.reproduce_fig1_right(args.scale, seed, args.workers)
        fits = None
        for key, value in summary.items():
            print(f"{key}: {value}")
    elif command == "fig2":
        table, fits = harness.reproduce_fig2(args.scale, seed, args.workers)
    else:  # pragma: no cover - argparse restricts the choices
        raise ValueError(f"unknown command {command!r}")
    if fits:
        for (scheme, name), fit in fits.items():
            print(
                f"{scheme} {name}-resolution slope: {fit.slope:.4f} "
                f"(n in {fit.window[0]}..{fit.window[1]})"
            )
    _write_outputs(table, args, fits)
    return 0


if __name__ == "__main__":
    sys.exit(main())
