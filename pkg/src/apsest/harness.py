"""Monte Carlo experiment engine: NMSE curves for every configured algorithm."""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import AlgorithmSpec, ExperimentConfig
from .estimators import HaugazeauConfig, RegularizedConfig, haugazeau_estimate, regularized_estimate
from .forward_model import ForwardOperator, build_grid, build_ula_operator, vectorize
from .solvers import FeasibilityProblem, pocs_baseline
from .statistics import DatasetStatistics, MahalanobisMetric, build_metric, compute_statistics
from .synthesis import sample_aps, sample_dataset, simulate_sample_covariance, trial_rng, true_covariance

__all__ = [
    "nmse",
    "ExperimentContext",
    "TrialResult",
    "ResultTable",
    "prepare_context",
    "run_trial",
    "run_experiment",
    "resolve_threads",
]

log = logging.getLogger(__name__)

RESULTS_HEADER = ["algorithm", "iteration", "mean_nmse", "stderr_nmse", "mean_feasibility_residual"]
# sample_dataset draws from stream (seed, 0); trials use (seed, 1, index)
TRIAL_STREAM = 1


def nmse(estimate, truth) -> float:
    """``||estimate - truth||^2 / ||truth||^2``."""
    truth = np.asarray(truth, dtype=float)
    denom = float(truth @ truth)
    if denom == 0.0:
        raise ValueError("NMSE undefined for an all-zero truth")
    diff = np.asarray(estimate, dtype=float) - truth
    return float(diff @ diff) / denom


@dataclass(frozen=True)
class ExperimentContext:
    """Everything shared read-only by the trials of one experiment."""

    config: ExperimentConfig
    operator: ForwardOperator
    stats: DatasetStatistics
    metric: MahalanobisMetric


@dataclass
class TrialResult:
    index: int
    nmse: dict = field(default_factory=dict)
    feasibility: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    elapsed_ms: dict = field(default_factory=dict)
    error: str | None = None


def prepare_context(config: ExperimentConfig, stats: DatasetStatistics | None = None) -> ExperimentContext:
    """Build the operator, learn dataset statistics (unless given) and the metric."""
    grid = build_grid(config.grid.lower_rad, config.grid.upper_rad, config.grid.num_points)
    op = build_ula_operator(config.array, grid)
    if stats is None:
        data = sample_dataset(config.aps_model_train, grid, config.dataset_size, config.master_seed)
        stats = compute_statistics(data)
    if stats.mean.size != grid.num_points:
        raise ValueError(f"statistics have dimension {stats.mean.size}, grid has {grid.num_points} points")
    alpha = config.alpha_rule.alpha(stats.spectral_norm)
    metric = build_metric(stats, alpha, normalize=config.alpha_rule.normalize)
    return ExperimentContext(config, op, stats, metric)


def _pad(values, length):
    values = list(values[:length])
    if not values:
        return np.full(length, np.nan)
    return np.array(values + [values[-1]] * (length - len(values)))


def _run_algorithm(ctx: ExperimentContext, spec: AlgorithmSpec, r, truth):
    """NMSE and feasibility-residual curves (length ``iterations``) of one algorithm.

    Entry ``k`` describes the estimate after ``k + 1`` iterations. One-shot
    solvers produce constant curves.
    """
    a = ctx.operator.matrix_a
    steps = spec.max_iterations or ctx.config.iterations
    length = ctx.config.iterations
    if spec.kind == "pocs":
        problem = FeasibilityProblem(a, r)
        res = pocs_baseline(problem, max_iters=steps, relaxation=spec.relaxation, keep_iterates=True)
        its = res.iterates
        errs = ((its - truth) ** 2).sum(axis=1) / float(truth @ truth)
        feas = np.linalg.norm(its @ a.T - r, axis=1)
        return _pad(errs, length), _pad(feas, length), res.converged
    if spec.kind == "haugazeau":
        cfg = HaugazeauConfig(gamma=spec.gamma, max_iterations=steps + 1)
        rho, rep = haugazeau_estimate(ctx.metric, a, r, ctx.stats.mean, cfg, truth=truth)
        # entry 0 is the starting point (the dataset mean)
        return _pad(rep.nmse[1:] or rep.nmse, length), _pad(rep.feasibility_residual[1:] or
                                                            rep.feasibility_residual, length), rep.converged
    est = regularized_estimate(ctx.metric, a, r, ctx.stats.mean, RegularizedConfig(spec.mu))
    return (np.full(length, nmse(est, truth)), np.full(length, float(np.linalg.norm(a @ est - r))), True)


def run_trial(ctx: ExperimentContext, index: int) -> TrialResult:
    """One Monte Carlo trial; reproducible from ``(master_seed, index)`` alone."""
    cfg = ctx.config
    out = TrialResult(index)
    try:
        rng = trial_rng(cfg.master_seed, TRIAL_STREAM, index)
        truth = sample_aps(cfg.aps_model_test, ctx.operator.grid, rng)
        cov = true_covariance(ctx.operator, truth)
        r = vectorize(simulate_sample_covariance(cov, cfg.channel_sim, rng))
        for spec in cfg.algorithms:
            start = time.perf_counter()
            errs, feas, conv = _run_algorithm(ctx, spec, r, truth)
            out.elapsed_ms[spec.name] = 1e3 * (time.perf_counter() - start)
            out.nmse[spec.name] = errs
            out.feasibility[spec.name] = feas
            out.converged[spec.name] = bool(conv)
    except Exception as exc:  # recorded and excluded, never silent
        out.error = f"{type(exc).__name__}: {exc}"
        log.warning("trial %d failed (master_seed=%d): %s", index, cfg.master_seed, out.error)
    return out


@dataclass
class ResultTable:
    algorithms: list
    iterations: int
    mean_nmse: np.ndarray
    stderr_nmse: np.ndarray
    mean_feasibility: np.ndarray
    converged_fraction: dict
    mean_elapsed_ms: dict
    num_trials: int
    failed_trials: list = field(default_factory=list)
    final_nmse_samples: dict = field(default_factory=dict, repr=False)

    def final(self, name: str) -> tuple[float, float]:
        """Mean and standard error of the NMSE at the last iteration."""
        i = self.algorithms.index(name)
        return float(self.mean_nmse[i, -1]), float(self.stderr_nmse[i, -1])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            for i, name in enumerate(self.algorithms):
                for k in range(self.iterations):
                    w.writerow([name, k + 1, repr(float(self.mean_nmse[i, k])),
                                repr(float(self.stderr_nmse[i, k])), repr(float(self.mean_feasibility[i, k]))])
        return path

    def write_curves(self, path) -> Path:
        """Wide layout: one mean-NMSE column per algorithm."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", *self.algorithms])
            for k in range(self.iterations):
                w.writerow([k + 1, *(repr(float(v)) for v in self.mean_nmse[:, k])])
        return path

    def summary(self) -> dict:
        return {
            "num_trials": self.num_trials,
            "failed_trials": self.failed_trials,
            "algorithms": {
                name: {
                    "final_mean_nmse": self.final(name)[0],
                    "final_stderr_nmse": self.final(name)[1],
                    "converged_fraction": self.converged_fraction[name],
                }
                for name in self.algorithms
            },
        }


def aggregate(config: ExperimentConfig, trials: list) -> ResultTable:
    """Average per-trial curves in trial-index order."""
    names = [a.name for a in config.algorithms]
    good = sorted((t for t in trials if t.error is None), key=lambda t: t.index)
    failed = sorted(t.index for t in trials if t.error is not None)
    if not good:
        raise RuntimeError(f"all {len(trials)} trials failed")
    count = len(good)
    shape = (len(names), config.iterations)
    mean = np.zeros(shape)
    stderr = np.zeros(shape)
    feas = np.zeros(shape)
    finals = {}
    for i, name in enumerate(names):
        curves = np.stack([t.nmse[name] for t in good])
        mean[i] = curves.mean(axis=0)
        stderr[i] = curves.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else 0.0
        feas[i] = np.stack([t.feasibility[name] for t in good]).mean(axis=0)
        finals[name] = curves[:, -1].copy()
    conv = {n: float(np.mean([t.converged[n] for t in good])) for n in names}
    elapsed = {n: float(np.mean([t.elapsed_ms[n] for t in good])) for n in names}
    return ResultTable(names, config.iterations, mean, stderr, feas, conv, elapsed, count, failed, finals)


def resolve_threads(threads: int | None = None) -> int:
    """``threads`` if given, else ``$APS_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("APS_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker(index):
    return run_trial(_WORKER_CTX, index)


def run_experiment(config: ExperimentConfig, threads: int | None = None, stats: DatasetStatistics | None = None,
                   output_dir=None, plot: bool = False, progress=None) -> ResultTable:
    """Run all trials of ``config`` and, if ``output_dir`` is set, write the artifacts.

    Files written: ``results.csv`` (long format), ``curves.csv`` (wide),
    ``summary.json``, ``timing.json`` and, on request, ``nmse.svg``.
    Everything except ``timing.json`` is byte-identical across reruns with
    the same config, independent of ``threads``.
    """
    ctx = prepare_context(config, stats)
    threads = resolve_threads(threads)
    indices = range(config.num_trials)
    start = time.perf_counter()
    if threads == 1:
        trials = []
        for i in indices:
            trials.append(run_trial(ctx, i))
            if progress:
                progress(i + 1, config.num_trials)
    else:
        with ProcessPoolExecutor(threads, mp_context=mp.get_context("fork"), initializer=_init_worker,
                                 initargs=(ctx,)) as pool:
            trials = []
            for done, t in enumerate(pool.map(_worker, indices, chunksize=max(1, config.num_trials // (4 * threads)))):
                trials.append(t)
                if progress:
                    progress(done + 1, config.num_trials)
    wall = time.perf_counter() - start
    table = aggregate(config, trials)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "results.csv")
        table.write_curves(out / "curves.csv")
        (out / "summary.json").write_text(json.dumps(table.summary(), indent=2, sort_keys=True) + "\n")
        timing = {"wall_clock_s": wall, "threads": threads, "mean_elapsed_ms": table.mean_elapsed_ms}
        (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
        if table.failed_trials:
            with open(out / "failures.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["trial", "master_seed", "error"])
                for t in sorted(trials, key=lambda t: t.index):
                    if t.error is not None:
                        w.writerow([t.index, config.master_seed, t.error])
        if plot:
            write_plot(table, out / "nmse.svg", title=config.name)
    return table


def write_plot(table: ResultTable, path, title: str = "") -> Path:
    """NMSE-versus-iteration line plot (SVG, log scale)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    its = np.arange(1, table.iterations + 1)
    for i, name in enumerate(table.algorithms):
        ax.semilogy(its, table.mean_nmse[i], label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("NMSE")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def config_as_dict(config: ExperimentConfig) -> dict:
    return json.loads(json.dumps(asdict(config), default=str))
