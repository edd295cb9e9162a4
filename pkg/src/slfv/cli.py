"""Command line entry point: ``slfv {simulate,analyze,cgp,bounds}``.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

from . import cgp
from .bounds import gamma_determ, gamma_lb_sto
from .config import DESK, ConfigError, RunConfig, load_config
from .events import MIXTURE_WEIGHTS, substream
from .runner import (BETA_HEADER, SPEED_HEADER, VAR_HEADER, RunAborted, analyze, fmt,
                     simulate, write_analysis)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

OUTPUT_HELP = """\
output files (CSV, header row, floats with 9 significant digits):
  simulate  OUT/rep_NNNNN/hitting.csv     x, tau, sigma        (nan = not reached)
            OUT/rep_NNNNN/front_sd.csv    t, sd, detached
            OUT/rep_NNNNN/manifest.json   config hash, seed, event counts, wall time
  analyze   speeds.csv          %s
            var_exponents.csv   %s
            beta_exponents.csv  %s
            sigma_minus_tau.csv x, mean_sigma_minus_tau
  cgp       exact / convergence-table: N, eps, eps_E, speed
            mc: quantity, value, stderr, ci_low, ci_high, n
  bounds    setting, C, gamma_determ, gamma_lb_sto
""" % (", ".join(SPEED_HEADER), ", ".join(VAR_HEADER), ", ".join(BETA_HEADER))


def _emit(header, rows, fh=None):
    w = csv.writer(fh or sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "desk", False):
        cfg.apply_geometry(DESK)
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    for name in ("setting", "n", "mixture", "replicates", "seed", "out", "jobs"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "mixture", None) is not None:
        cfg.mixture_weights = None
        if getattr(args, "setting", None) is None:
            cfg.setting = 3
    return cfg


def _add_run_flags(p, out=True):
    p.add_argument("--config", metavar="PATH", help="INI-style run configuration")
    p.add_argument("--setting", type=int, choices=(1, 2, 3))
    p.add_argument("--n", type=int, help="setting 2 elongation factor")
    p.add_argument("--mixture", type=int, choices=sorted(MIXTURE_WEIGHTS), help="setting 3 mixture")
    p.add_argument("--desk", action="store_true", help="reduced 20x20 geometry with delta = 1/50")
    if out:
        p.add_argument("--out", metavar="DIR")


def cmd_simulate(args) -> int:
    cfg = build_config(args).validate()

    def progress(m):
        if args.verbose:
            print(f"replicate {m['replicate']}: barrier at t={m['barrier_time']:.6g}, "
                  f"{m['events_drawn']} events", file=sys.stderr)

    simulate(cfg, args.jobs, progress)
    print(f"{cfg.replicates} replicates written to {cfg.out} (config {cfg.config_hash()[:12]})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    window = tuple(args.var_window) if args.var_window else None
    res = analyze(args.results, window)
    write_analysis(res, args.out or args.results)
    print(f"# {res.replicates} replicates, setting {res.label}")
    _emit(SPEED_HEADER, res.speed_rows)
    print()
    _emit(VAR_HEADER, res.var_rows)
    print()
    if res.beta_rows:
        _emit(BETA_HEADER, res.beta_rows)
    else:
        print("# front never detached in most replicates; no stage split")
    p = res.plateau
    if p is None:
        print("\n# sigma - tau plateau: too few positions reached in every replicate")
        return EXIT_OK
    print(f"\n# sigma - tau plateau over x in [{p.window[0]:.6g}, {p.window[1]:.6g}]: "
          f"mean {p.plateau_mean:.6g}, drift {p.drift_slope:.3g} (t = {p.drift_t:.3g})")
    return EXIT_OK


def _parse_schedule(text):
    sched = []
    for part in text.split(","):
        if ":" in part:
            N, eps = part.split(":")
            sched.append((int(N), float(eps)))
        else:
            N = int(part)
            sched.append((N, float(N) ** -3))
    return sched


def cmd_cgp(args) -> int:
    header = ["N", "eps", "eps_E", "speed"]
    if args.mode == "exact":
        Ns = args.N or [50, 100, 200, 400]
        rows = []
        for N in Ns:
            eps = args.eps if args.eps is not None else float(N) ** -3
            v = eps * cgp.expected_return_time(N, eps)
            rows.append((N, eps, v, cgp.speed_from_T(v)))
        _emit(header, rows)
    elif args.mode == "convergence-table":
        sched = _parse_schedule(args.schedule) if args.schedule else None
        est = cgp.approximate_T_square(sched)
        rows = [(r.N, r.eps, r.eps_E, r.speed) for r in est.rows]
        rows.append(("limit", math.nan, est.extrapolated, est.speed))
        _emit(header, rows)
    else:
        rng = substream(args.seed, 0)
        T, M = cgp.sample_excursions(args.excursions, rng)
        sp = cgp.estimate_speed_mc(args.t_max, args.reps, substream(args.seed, 1))
        n = T.size
        rows = []
        for name, vals in (("T_sq", T), ("M_at_T", M.astype(float)), ("M_minus_T", M - T)):
            se = float(vals.std(ddof=1) / math.sqrt(n))
            rows.append((name, vals.mean(), se, vals.mean() - 1.96 * se, vals.mean() + 1.96 * se, n))
        rows.append(("speed_renewal", cgp.renewal_speed(T, M), math.nan, math.nan, math.nan, n))
        rows.append(("speed_M_t_over_t", sp.speed, sp.stderr, sp.ci_low, sp.ci_high, sp.reps))
        _emit(["quantity", "value", "stderr", "ci_low", "ci_high", "n"], rows)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = build_config(args)
    C = cfg.geometry().C
    if args.setting is not None or args.config or args.mixture is not None:
        cases = [cfg]
    else:
        cases = [RunConfig(setting=1)]
        cases += [RunConfig(setting=2, n=n) for n in range(1, 8)]
        cases += [RunConfig(setting=3, mixture=k) for k in sorted(MIXTURE_WEIGHTS)]
    rows = []
    for c in cases:
        mu = c.distribution()
        rows.append((c.label(), C, gamma_determ(mu, C), gamma_lb_sto(mu, C)))
    _emit(["setting", "C", "gamma_determ", "gamma_lb_sto"], rows)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slfv", description="Infinite-parent SLFV growth simulations and the 2-CGP.",
        epilog=OUTPUT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run seeded replicates to the right barrier",
                       epilog=OUTPUT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_run_flags(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--jobs", type=int, help="worker processes (default: $SLFV_JOBS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="speed, variance and fluctuation exponents of a results directory",
                       epilog=OUTPUT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("results", metavar="DIR")
    p.add_argument("--out", metavar="DIR", help="where to write the tables (default: DIR)")
    p.add_argument("--var-window", nargs=2, type=float, metavar=("LO", "HI"),
                   help="x window of the variance fits (default: upper half of the log-x range)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cgp", help="two-columns growth process")
    p.add_argument("mode", choices=("mc", "exact", "convergence-table"))
    p.add_argument("--N", type=int, nargs="+", help="exact: chain sizes (default 50 100 200 400)")
    p.add_argument("--eps", type=float, help="exact: timestep (default N^-3)")
    p.add_argument("--schedule", help="convergence-table: 'N[:eps],...' (default 50,100,200,400)")
    p.add_argument("--t-max", type=float, default=1e4)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--excursions", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cgp)

    p = sub.add_parser("bounds", help="analytic speed lower bounds")
    _add_run_flags(p, out=False)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"slfv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"slfv: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunAborted, ArithmeticError, OSError) as exc:
        print(f"slfv: aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
