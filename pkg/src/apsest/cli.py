"""Command line interface: ``apsest <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, GridParams, load_config
from .estimators import HaugazeauConfig, RegularizedConfig, haugazeau_estimate, regularized_estimate
from .forward_model import ArrayConfig, build_grid, build_ula_operator, load_operator, save_operator
from .harness import nmse, run_experiment
from .solvers import FeasibilityProblem, pocs_baseline
from .statistics import build_metric, compute_statistics, load_statistics, save_statistics
from .synthesis import ApsModelConfig, load_dataset, sample_dataset, save_dataset

log = logging.getLogger("apsest")


def _add_array_grid_args(p):
    p.add_argument("--config", help="take array/grid/APS-model settings from an experiment config")
    p.add_argument("--num-antennas", type=int, default=None)
    p.add_argument("--frequency", type=float, default=None, help="carrier frequency in Hz")
    p.add_argument("--num-points", type=int, default=None, help="grid size D")


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    array = cfg.array
    if args.num_antennas is not None or args.frequency is not None:
        array = ArrayConfig(args.num_antennas or array.num_antennas,
                            args.frequency or array.carrier_frequency_hz, array.wave_speed_m_s)
    grid = cfg.grid
    if args.num_points is not None:
        grid = GridParams(grid.lower_rad, grid.upper_rad, args.num_points)
    return cfg.with_overrides(array=array, grid=grid)


def _grid(cfg):
    return build_grid(cfg.grid.lower_rad, cfg.grid.upper_rad, cfg.grid.num_points)


def cmd_generate_dataset(args):
    cfg = _base_config(args)
    model = cfg.aps_model_train
    if args.interval is not None:
        model = ApsModelConfig(model.num_paths_choices, tuple(args.interval), model.spread_rad,
                               model.weight_normalization)
    grid = _grid(cfg)
    samples = sample_dataset(model, grid, args.count, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    path, meta = save_dataset(samples, out, grid, model, args.seed)
    print(f"wrote {samples.shape[0]} samples to {path} (metadata {meta})")


def cmd_compute_stats(args):
    samples, _ = load_dataset(args.dataset)
    stats = compute_statistics(samples)
    save_statistics(stats, args.out)
    print(f"wrote statistics of {stats.sample_count} samples to {args.out} "
          f"(||C||_2 = {stats.spectral_norm:.6g})")


def cmd_build_operator(args):
    cfg = _base_config(args)
    op = build_ula_operator(cfg.array, _grid(cfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_operator(op, out)
    print(f"wrote {op.shape[0]}x{op.shape[1]} operator to {out}")


def _read_vector(path) -> np.ndarray:
    values = np.loadtxt(path, delimiter=",", ndmin=1, comments="#")
    return np.asarray(values, dtype=float).reshape(-1)


def _write_trace(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_estimate(args):
    op = load_operator(args.operator)
    r = _read_vector(args.covariance)
    if r.size != op.shape[0]:
        raise ValueError(f"{args.covariance}: {r.size} values, operator expects {op.shape[0]}")
    truth = _read_vector(args.truth) if args.truth else None
    a = op.matrix_a
    if args.algorithm == "pocs":
        res = pocs_baseline(FeasibilityProblem(a, r), max_iters=args.iterations, relaxation=args.relaxation)
        est = res.solution
        if args.trace:
            _write_trace(args.trace, ["iteration", "residual", "min_entry"], res.trace_rows())
        info = {"converged": res.converged, "iterations": res.iterations}
    else:
        if not args.stats:
            raise ValueError(f"--stats is required for the {args.algorithm} estimator")
        stats = load_statistics(args.stats)
        if stats.mean.size != op.shape[1]:
            raise ValueError(f"statistics have dimension {stats.mean.size}, operator has {op.shape[1]} columns")
        alpha = args.alpha if args.alpha is not None else stats.spectral_norm / args.alpha_divisor
        metric = build_metric(stats, alpha, normalize=not args.no_normalize)
        if args.algorithm == "haugazeau":
            cfg = HaugazeauConfig(args.gamma, args.iterations)
            est, rep = haugazeau_estimate(metric, a, r, stats.mean, cfg, truth=truth, trace=bool(args.trace))
            if args.trace:
                _write_trace(args.trace, ["iteration", "nmse_if_truth_known", "feasibility_residual",
                                          "fixed_point_gap", "elapsed_ms"], rep.trace_rows())
            info = {"converged": rep.converged, "iterations": rep.iterations,
                    "fixed_point_gap": rep.fixed_point_gap[-1] if rep.fixed_point_gap else None,
                    "clipped_negative_mass": float(-np.minimum(est, 0.0).sum())}
            # iterates reach the cone only in the limit
            est = np.maximum(est, 0.0)
        else:
            est = regularized_estimate(metric, a, r, stats.mean, RegularizedConfig(args.mu))
            info = {"mu": args.mu}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, est, delimiter=",", fmt="%.17g")
    info["feasibility_residual"] = float(np.linalg.norm(a @ est - r))
    if truth is not None:
        info["nmse"] = nmse(est, truth)
    print(json.dumps({"algorithm": args.algorithm, "out": str(out), **info}))


def cmd_run_experiment(args):
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(num_trials=args.trials, master_seed=args.seed)
    stats = load_statistics(args.stats) if args.stats else None
    out = Path(args.out) if args.out else Path(cfg.output_dir)

    def progress(done, total):
        if args.verbose and (done == total or done % max(1, total // 10) == 0):
            log.info("%s: %d/%d trials", cfg.name, done, total)

    table = run_experiment(cfg, threads=args.threads, stats=stats, output_dir=out, plot=args.plot,
                           progress=progress)
    if args.trace:
        _trace_first_trial(cfg, stats, out)
    for name in table.algorithms:
        mean, se = table.final(name)
        print(f"{name:>12s}: final NMSE {mean:.5g} +/- {se:.2g}")
    if table.failed_trials:
        print(f"{len(table.failed_trials)} trial(s) failed; see {out / 'failures.csv'}", file=sys.stderr)
    print(f"results written to {out / 'results.csv'}")


def _trace_first_trial(cfg, stats, out):
    """Per-iteration traces of trial 0 for every iterative algorithm."""
    from .harness import TRIAL_STREAM, prepare_context
    from .forward_model import vectorize
    from .synthesis import sample_aps, simulate_sample_covariance, trial_rng, true_covariance

    ctx = prepare_context(cfg, stats)
    rng = trial_rng(cfg.master_seed, TRIAL_STREAM, 0)
    truth = sample_aps(cfg.aps_model_test, ctx.operator.grid, rng)
    r = vectorize(simulate_sample_covariance(true_covariance(ctx.operator, truth), cfg.channel_sim, rng))
    a = ctx.operator.matrix_a
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for spec in cfg.algorithms:
        steps = spec.max_iterations or cfg.iterations
        if spec.kind == "haugazeau":
            _, rep = haugazeau_estimate(ctx.metric, a, r, ctx.stats.mean,
                                        HaugazeauConfig(spec.gamma, steps), truth=truth)
            _write_trace(traces / f"{spec.name}.csv", ["iteration", "nmse_if_truth_known", "feasibility_residual",
                                                       "fixed_point_gap", "elapsed_ms"], rep.trace_rows())
        elif spec.kind == "pocs":
            res = pocs_baseline(FeasibilityProblem(a, r), max_iters=steps, relaxation=spec.relaxation)
            _write_trace(traces / f"{spec.name}.csv", ["iteration", "residual", "min_entry"], res.trace_rows())


def cmd_oracle(args):
    from .oracle_checks import run_all

    ok = run_all(seed=args.seed, count=args.count, out=sys.stdout)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apsest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate-dataset", help="sample APS training data to CSV")
    _add_array_grid_args(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="dataset.csv")
    p.add_argument("--interval", type=float, nargs=2, metavar=("LOW", "HIGH"),
                   help="override the path-angle interval (radians)")
    p.set_defaults(func=cmd_generate_dataset)

    p = sub.add_parser("compute-stats", help="mean/covariance of a dataset CSV into a directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="stats")
    p.set_defaults(func=cmd_compute_stats)

    p = sub.add_parser("build-operator", help="write the ULA forward operator (.csv or binary)")
    _add_array_grid_args(p)
    p.add_argument("--out", default="operator.bin")
    p.set_defaults(func=cmd_build_operator)

    p = sub.add_parser("estimate", help="estimate one APS from a covariance vector")
    p.add_argument("--operator", required=True)
    p.add_argument("--covariance", required=True, help="CSV with the 2N-1 covariance-vector entries")
    p.add_argument("--stats", help="statistics directory (mean.csv, covariance.csv, meta.json)")
    p.add_argument("--algorithm", choices=("haugazeau", "regularized", "pocs"), default="haugazeau")
    p.add_argument("--gamma", type=float, default=5.0)
    p.add_argument("--mu", type=float, default=5e4)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--relaxation", type=float, default=1.0)
    p.add_argument("--alpha", type=float, help="absolute alpha (overrides --alpha-divisor)")
    p.add_argument("--alpha-divisor", type=float, default=100.0, help="alpha = ||C||_2 / divisor")
    p.add_argument("--no-normalize", action="store_true", help="keep the metric unscaled")
    p.add_argument("--truth", help="optional true APS CSV, enables NMSE reporting")
    p.add_argument("--out", default="aps_estimate.csv")
    p.add_argument("--trace", help="write a per-iteration trace CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("run-experiment", help="run a Monte Carlo study from a TOML config")
    p.add_argument("--config", required=True, help="config path or shipped name (fig1, fig2, fig3)")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.add_argument("--threads", type=int, help="worker processes (default: $APS_THREADS or 1)")
    p.add_argument("--trials", type=int, help="override num_trials")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--stats", help="reuse a statistics directory instead of sampling a dataset")
    p.add_argument("--plot", action="store_true", help="also write nmse.svg")
    p.add_argument("--trace", action="store_true", help="write per-iteration traces of trial 0")
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("oracle", help="check the solvers against brute-force oracles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10, help="random instances per check")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"apsest {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
