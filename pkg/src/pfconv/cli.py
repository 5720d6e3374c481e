"""Command-line interface.

Subcommands: simulate, filter, grid, moments, converge, check-resampler.
Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .convergence import ExperimentConfig, run_convergence_study
from .configfile import apply_overrides, load_config
from .cox import CoxParams, GammaProposal, ObservationSeries, \
    make_bootstrap_proposal, make_cox_model, make_gamma_proposal, simulate, states_to_csv
from .engine import run_filter
from .errors import PfconvError
from .gridfilter import run_cox_grid_filter
from .model import make_test_function
from .moments import MomentCondition, check_cox_moment_condition, \
    quadrature_weight_moment
from .report import emit_report, histogram_svg_text
from .resampling import SCHEMES, get_scheme
from .rng import RngStream


def _fmt(x) -> str:
    return repr(float(x))


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfconv",
        description="Particle filter with singular importance weights: "
                    "simulation, filtering, oracles, and convergence studies.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="simulate a count series from the intensity model")
    p.add_argument("--c", type=float, default=0.5, help="intensity slope (lambda = c*x)")
    p.add_argument("--eta", type=float, default=0.1, help="per-step increment variance")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="observation CSV path (t,y)")
    p.add_argument("--states-out", help="optional trajectory CSV path (t,x)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("filter", help="run the particle filter over an observation CSV")
    p.add_argument("--observations", required=True)
    p.add_argument("--n", type=int, default=10000, help="particle count")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--proposal", choices=["gamma", "bootstrap"], default="gamma")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--resampler", choices=sorted(SCHEMES), default="multinomial")
    p.add_argument("--phi", type=_str_list, default=("exp_neg",),
                   help="comma-separated registry test functions")
    p.add_argument("--out", required=True, help="per-step estimate CSV path")
    p.add_argument("--svg", help="optional histogram-vs-grid-density SVG")
    p.add_argument("--hist-step", type=int, default=11)
    p.add_argument("--hist-bins", type=int, default=30)
    p.add_argument("--hist-min", type=float, default=0.0)
    p.add_argument("--hist-max", type=float, default=6.0)
    p.add_argument("--dx", type=float, default=0.005, help="oracle grid spacing (for --svg)")
    p.add_argument("--x-max", type=float, default=15.0, help="oracle grid extent (for --svg)")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("grid", help="run the dense-grid reference filter")
    p.add_argument("--observations", required=True)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--dx", type=float, default=0.005)
    p.add_argument("--x-max", type=float, default=15.0)
    p.add_argument("--phi", default="exp_neg")
    p.add_argument("--out", required=True, help="per-step CSV (t,estimate_phi,grid_mean,grid_var)")
    p.add_argument("--density-out", help="optional full density dump CSV (t,x,density)")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("moments", help="weight-moment verdicts for the Gamma proposal")
    p.add_argument("--p", type=_int_list, default=(2, 4))
    p.add_argument("--alpha", type=_float_list, default=(1.5,))
    p.add_argument("--beta", type=_float_list, default=(0.5,))
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--x-prev", type=float, default=1.0)
    p.add_argument("--level", type=int, default=12, help="quadrature refinement level")
    p.add_argument("--json", dest="json_out", help="optional JSON output path")
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("converge", help="run a convergence-rate study")
    p.add_argument("--config", help="study config file")
    p.add_argument("--observations")
    p.add_argument("--c", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--proposal", choices=["gamma", "bootstrap"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--particle-counts", type=_int_list)
    p.add_argument("--replicates", type=int)
    p.add_argument("--test-functions", type=_str_list)
    p.add_argument("--moments", type=_int_list)
    p.add_argument("--resampler", choices=sorted(SCHEMES))
    p.add_argument("--master-seed", type=int)
    p.add_argument("--dx", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--csv", dest="out_csv")
    p.add_argument("--json", dest="out_json")
    p.add_argument("--svg", dest="out_svg")
    p.add_argument("--workers", type=int, help="worker processes (default: PFCONV_WORKERS or cores)")
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("check-resampler", help="statistical contract checks for one scheme")
    p.add_argument("--resampler", choices=sorted(SCHEMES), required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_check_resampler)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_simulate(args) -> int:
    params = CoxParams(args.c, args.eta)
    states, obs = simulate(params, args.steps, args.seed)
    obs.to_csv(args.out)
    if args.states_out:
        states_to_csv(states, args.states_out)
    print(f"wrote {len(obs)} observations to {args.out}")
    return 0


def _build_cox(args):
    params = CoxParams(args.c, args.eta)
    model = make_cox_model(params)
    if args.proposal == "bootstrap":
        proposal = make_bootstrap_proposal(params)
    else:
        proposal = make_gamma_proposal(GammaProposal(args.alpha, args.beta))
    return params, model, proposal


def _cmd_filter(args) -> int:
    params, model, proposal = _build_cox(args)
    obs = ObservationSeries.from_csv(args.observations)
    phis = [make_test_function(name) for name in args.phi]
    run = run_filter(model, proposal, obs, args.n, get_scheme(args.resampler),
                     args.seed, phis, record_clouds=args.n if args.svg else 0)
    names = [phi.name for phi in phis]
    with open(args.out, "w", newline="") as fh:
        head = ["t"] + [f"estimate_{n}" for n in names] \
            + [f"resampled_estimate_{n}" for n in names] + ["ess", "log_mean_weight"]
        fh.write(",".join(head) + "\n")
        for step in run.steps:
            row = [str(step.t)] + [_fmt(step.estimates[n]) for n in names] \
                + [_fmt(step.resampled_estimates[n]) for n in names] \
                + [_fmt(step.ess), _fmt(step.log_mean_weight)]
            fh.write(",".join(row) + "\n")
    print(f"filter: {len(run.steps)} steps, N={args.n}, "
          f"log evidence {run.log_evidence:.6f} -> {args.out}")
    if args.svg:
        _write_filter_histogram(args, params, obs, run)
        print(f"histogram overlay -> {args.svg}")
    return 0


def _write_filter_histogram(args, params, obs, run) -> None:
    n_cells = int(round(args.x_max / args.dx))
    grun = run_cox_grid_filter(params, obs, args.x_max, n_cells)
    t_idx = list(grun.steps).index(args.hist_step)
    grid = grun.grids[t_idx]
    step = next(s for s in run.steps if s.t == args.hist_step)
    edges = np.linspace(args.hist_min, args.hist_max, args.hist_bins + 1)
    mass, _ = np.histogram(step.cloud.normalized_particles, bins=edges,
                           weights=step.cloud.normalized_weights)
    keep = grid.midpoints() <= args.hist_max
    svg = histogram_svg_text(edges, mass, grid.midpoints()[keep], grid.values[keep],
                             title=f"filtering density at t={args.hist_step}")
    with open(args.svg, "w", newline="") as fh:
        fh.write(svg)


def _cmd_grid(args) -> int:
    params = CoxParams(args.c, args.eta)
    obs = ObservationSeries.from_csv(args.observations)
    phi = make_test_function(args.phi)
    n_cells = int(round(args.x_max / args.dx))
    run = run_cox_grid_filter(params, obs, args.x_max, n_cells, [phi])
    with open(args.out, "w", newline="") as fh:
        fh.write("t,estimate_phi,grid_mean,grid_var\n")
        for i, t in enumerate(run.steps):
            fh.write(f"{t},{_fmt(run.estimates[phi.name][i])},"
                     f"{_fmt(run.means[i])},{_fmt(run.variances[i])}\n")
    if args.density_out:
        with open(args.density_out, "w", newline="") as fh:
            fh.write("t,x,density\n")
            for i, t in enumerate(run.steps):
                mids = run.grids[i].midpoints()
                for x, v in zip(mids, run.grids[i].values):
                    fh.write(f"{t},{x:.17g},{v:.17g}\n")
    print(f"grid: {len(run.steps)} steps, {n_cells} cells -> {args.out}")
    return 0


def _cmd_moments(args) -> int:
    params = CoxParams(args.c, args.eta)
    model = make_cox_model(params)
    rows = []
    for p in args.p:
        for alpha in args.alpha:
            for beta in args.beta:
                verdict = check_cox_moment_condition(
                    MomentCondition(p, alpha, beta, args.c, args.eta))
                quad = None
                if verdict.tail_rate < 0:
                    proposal = make_gamma_proposal(GammaProposal(alpha, beta))
                    quad = quadrature_weight_moment(model, proposal, args.x_prev,
                                                    0, p, args.level)
                rows.append({
                    "p": p, "alpha": alpha, "beta": beta, "c": args.c, "eta": args.eta,
                    "s": verdict.singularity_exponent, "tail_rate": verdict.tail_rate,
                    "status": verdict.status.value, "bound": verdict.bound,
                    "quadrature_estimate": quad,
                })
    cols = ["p", "alpha", "beta", "c", "eta", "s", "tail_rate",
            "status", "bound", "quadrature_estimate"]
    widths = {c: max(len(c), 22) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for row in rows:
        cells = ["" if row[c] is None else
                 (row[c] if isinstance(row[c], str) else _fmt(row[c]))
                 for c in cols]
        print("  ".join(str(v).ljust(widths[c]) for c, v in zip(cols, cells)))
    if args.json_out:
        with open(args.json_out, "w", newline="") as fh:
            json.dump({"schema_version": 1, "rows": rows}, fh, indent=2)
            fh.write("\n")
        print(f"verdicts -> {args.json_out}")
    return 0


def _cmd_converge(args) -> int:
    if args.config:
        config = load_config(args.config)
    elif args.observations:
        config = ExperimentConfig(observations=args.observations)
    else:
        print("error: converge needs --config or --observations", file=sys.stderr)
        return 1
    config = apply_overrides(
        config,
        observations=args.observations, c=args.c, eta=args.eta,
        proposal=args.proposal, alpha=args.alpha, beta=args.beta,
        particle_counts=args.particle_counts, replicates=args.replicates,
        test_functions=args.test_functions, moments=args.moments,
        resampler=args.resampler, master_seed=args.master_seed,
        grid_dx=args.dx, grid_x_max=args.x_max,
        out_csv=args.out_csv, out_json=args.out_json, out_svg=args.out_svg,
    )
    report = run_convergence_study(config, workers=args.workers)
    for fmt, path in (("csv", config.out_csv), ("json", config.out_json),
                      ("svg", config.out_svg)):
        if path:
            emit_report(report, fmt, path)
            print(f"{fmt} -> {path}")
    for f in report.rate_fits:
        if f["t"] == "mean" and f["stage"] == "normalized":
            print(f"slope[{f['phi']}, p={f['moment']}, mean over t] = "
                  f"{f['slope']:+.3f} (r^2 = {f['r_squared']:.3f})")
    return 0


def _cmd_check_resampler(args) -> int:
    scheme = get_scheme(args.resampler)
    root = RngStream(args.seed)
    n = args.n
    failures = []

    sums_ok = True
    for trial in range(args.trials):
        w = root.derive(0, trial).gen.dirichlet(np.ones(n))
        counts = scheme.resample(w, n, root.derive(1, trial))
        if int(counts.sum()) != n or np.any(counts < 0):
            sums_ok = False
            break
    if not sums_ok:
        failures.append("count totals")
    print(f"count totals: {'ok' if sums_ok else 'FAILED'} ({args.trials} trials)")

    w = root.derive(2).gen.dirichlet(np.ones(n))
    totals = np.zeros(n)
    brackets_ok = True
    for trial in range(args.trials):
        counts = scheme.resample(w, n, root.derive(3, trial))
        totals += counts
        if scheme.kind == "systematic":
            low, high = np.floor(n * w), np.ceil(n * w)
            if np.any(counts < low) or np.any(counts > high):
                brackets_ok = False
    mean_counts = totals / args.trials
    sigma = np.sqrt(n * w * (1 - w) / args.trials)
    unbiased_ok = bool(np.all(np.abs(mean_counts - n * w) <= 3 * sigma + 1e-12))
    if not unbiased_ok:
        failures.append("unbiasedness")
    print(f"mean counts within 3 sigma of N*w: {'ok' if unbiased_ok else 'FAILED'}")
    if scheme.kind == "systematic":
        if not brackets_ok:
            failures.append("bracketing")
        print(f"counts bracket N*w within one unit: {'ok' if brackets_ok else 'FAILED'}")

    if failures:
        print(f"contract violations: {', '.join(failures)}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------


def cli_dispatch(argv) -> int:
    """Parse and run; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse handles --help and usage errors
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return int(args.func(args))
    except (PfconvError, OSError, KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
