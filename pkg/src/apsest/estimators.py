"""Hybrid APS estimators built on the proximal map of the NNLS cost.

``g(rho) = ||A rho - r||^2 + indicator(rho >= 0)``. Its proximal map in the
``M``-weighted geometry is a single NNLS solve; Haugazeau's iteration on top
of it projects the dataset mean onto the NNLS solution set, and one prox
evaluation at the mean gives the regularized estimator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .solvers import NnlsError, NnlsResult, kkt_violation, nnls_gram
from .statistics import MahalanobisMetric

__all__ = [
    "HaugazeauBreakdown",
    "ProxSubproblem",
    "HaugazeauConfig",
    "RegularizedConfig",
    "ConvergenceReport",
    "prox_g",
    "haugazeau_q",
    "haugazeau_estimate",
    "regularized_estimate",
]


class HaugazeauBreakdown(ArithmeticError):
    """The halfspace intersection in Haugazeau's step is empty (numerical breakdown)."""


def _metric_matrix(metric):
    if isinstance(metric, MahalanobisMetric):
        return metric.matrix_m
    return np.asarray(metric, dtype=float)


class ProxSubproblem:
    """Cached data for ``prox_{gamma g}`` under the metric ``M``.

    ``Q = A^T A + M / (2 gamma)`` and its Cholesky factor are built once;
    each evaluation only forms ``c = A^T r + M x / (2 gamma)`` and runs the
    active-set solver, warm-started from the previous passive set.
    """

    def __init__(self, metric, operator_a, target_r, gamma: float):
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        a = np.asarray(operator_a, dtype=float)
        r = np.asarray(target_r, dtype=float)
        m = _metric_matrix(metric)
        d = a.shape[1]
        if m.shape != (d, d) or r.shape != (a.shape[0],):
            raise ValueError(f"inconsistent shapes: A {a.shape}, r {r.shape}, M {m.shape}")
        self.gamma = float(gamma)
        self.operator_a = a
        self.target_r = r
        self.metric_m = m
        self.weight = 1.0 / (2.0 * self.gamma)
        q = a.T @ a + self.weight * m
        self.q_matrix = np.ascontiguousarray(0.5 * (q + q.T))
        self.factor = np.linalg.cholesky(self.q_matrix)
        self._atr = a.T @ r
        self._passive = None
        self.last_result: NnlsResult | None = None

    def rhs(self, x) -> np.ndarray:
        return self._atr + self.weight * (self.metric_m @ x)

    def __call__(self, x, warm_start: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = self.rhs(x)
        passive = self._passive if warm_start else None
        # ||L^T y - L^{-1} c||^2 = y^T Q y - 2 c^T y + ||L^{-1} c||^2
        half = np.linalg.solve(self.factor, c)
        res = nnls_gram(self.q_matrix, c, passive=passive, target_norm_sq=float(half @ half))
        self._passive = res.passive
        self.last_result = res
        return res.solution

    def objective(self, y, x) -> float:
        """``||A y - r||^2 + ||y - x||_M^2 / (2 gamma)``."""
        diff = y - x
        resid = self.operator_a @ y - self.target_r
        return float(resid @ resid + self.weight * diff @ self.metric_m @ diff)

    def kkt(self, y, x) -> float:
        """KKT violation of ``y`` as a minimizer of :meth:`objective` (gradient ``2Qy - 2c``)."""
        grad = 2.0 * (self.q_matrix @ y - self.rhs(x))
        return kkt_violation(grad, y)


def prox_g(metric, operator_a, target_r, gamma: float, x) -> np.ndarray:
    """Minimizer over ``y >= 0`` of ``||A y - r||^2 + ||y - x||_M^2 / (2 gamma)``."""
    return ProxSubproblem(metric, operator_a, target_r, gamma)(x)


def haugazeau_q(metric, x, y, z, rel_tol: float = 1e-14) -> np.ndarray:
    """Projection of ``x`` onto ``{u : <u-y, x-y> <= 0} & {u : <u-z, y-z> <= 0}``.

    All inner products are taken in the ``M`` geometry. ``delta`` is treated
    as zero when ``|delta| <= rel_tol * mu * nu``.
    """
    m = np.ascontiguousarray(_metric_matrix(metric))
    x, y, z = (np.ascontiguousarray(v, dtype=float) for v in (x, y, z))
    out, status = _kernels.haugazeau_q(m, x, y, z, float(rel_tol))
    if status:
        raise HaugazeauBreakdown("empty halfspace intersection (delta == 0, chi < 0)")
    return out


@dataclass(frozen=True)
class HaugazeauConfig:
    gamma: float = 5.0
    max_iterations: int = 500
    fixed_point_tol: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.fixed_point_tol is not None and not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")


@dataclass(frozen=True)
class RegularizedConfig:
    mu: float = 5e4

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    tolerance: float
    fixed_point_gap: list = field(default_factory=list)
    feasibility_residual: list = field(default_factory=list)
    nmse: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    max_prox_kkt: float = 0.0

    def trace_rows(self):
        """Rows of (iteration, nmse, feasibility_residual, fixed_point_gap, elapsed_ms)."""
        for k in range(len(self.fixed_point_gap)):
            nmse = self.nmse[k] if self.nmse else float("nan")
            yield (k + 1, nmse, self.feasibility_residual[k], self.fixed_point_gap[k],
                   self.elapsed_ms[k])


def haugazeau_estimate(metric, operator_a, target_r, rho_hat, config: HaugazeauConfig | None = None,
                       truth=None, callback=None, trace: bool = False):
    """Project ``rho_hat`` onto the NNLS solution set with Haugazeau's method.

    ``rho_{n+1} = Q(rho_1, rho_n, prox(rho_n))`` with ``rho_1 = rho_hat``,
    stopped when ``||rho_n - prox(rho_n)||_M`` drops below the tolerance
    (default ``1e-7 (1 + ||rho_hat||_M)``).

    Returns ``(estimate, report)``. Without ``truth``, ``callback`` or
    ``trace`` the whole loop runs inside one compiled call and the report
    only carries the fixed-point gaps. Otherwise iterations are driven one
    at a time and entry ``k`` of every trace list describes ``rho_{k+1}``;
    ``callback(k, rho)`` sees each iterate.
    """
    config = config or HaugazeauConfig()
    m = np.ascontiguousarray(_metric_matrix(metric))
    rho_hat = np.ascontiguousarray(rho_hat, dtype=float)
    prox = ProxSubproblem(m, operator_a, target_r, config.gamma)
    chol = np.ascontiguousarray(np.linalg.cholesky(m))
    if rho_hat.shape != (m.shape[0],):
        raise ValueError(f"rho_hat has shape {rho_hat.shape}, expected ({m.shape[0]},)")

    tol = config.fixed_point_tol
    if tol is None:
        tol = 1e-7 * (1.0 + float(np.linalg.norm(chol.T @ rho_hat)))
    truth_sq = None
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        truth_sq = float(truth @ truth)
    stepwise = trace or truth is not None or callback is not None

    n = rho_hat.size
    max_iter = config.max_iterations
    report = ConvergenceReport(False, 0, tol)
    rho = rho_hat.copy()
    passive = np.zeros(n, dtype=bool)
    gaps = np.empty(max_iter)
    p = np.zeros(n)
    atr = np.ascontiguousarray(prox.rhs(np.zeros(n)))
    args = (m, chol, prox.q_matrix, atr, prox.weight, rho_hat)
    start = time.perf_counter()
    done = 0
    while done < max_iter:
        if stepwise:
            current = rho.copy()
        chunk = 1 if stepwise else max_iter - done
        steps, converged, status = _kernels.haugazeau_run(
            *args, rho, passive, chunk, tol, 1e-10, 10 * n, 1e-14, gaps[done:], p)
        if status == 1:
            raise NnlsError(f"prox NNLS iteration limit reached at Haugazeau step {done + steps + 1}")
        if status == 2:
            raise HaugazeauBreakdown(f"empty halfspace intersection at Haugazeau step {done + steps}")
        if stepwise:
            report.max_prox_kkt = max(report.max_prox_kkt, prox.kkt(p, current))
            report.feasibility_residual.append(float(np.linalg.norm(prox.operator_a @ current - prox.target_r)))
            if truth_sq is not None:
                report.nmse.append(float(np.sum((current - truth) ** 2) / truth_sq))
            report.elapsed_ms.append(1e3 * (time.perf_counter() - start))
            if callback is not None:
                callback(done, current)
        done += steps
        if converged:
            report.converged = True
            break
    if not stepwise:
        # unless converged, rho is one step past the last evaluated prox
        report.elapsed_ms = [1e3 * (time.perf_counter() - start)]
        report.feasibility_residual = [float(np.linalg.norm(prox.operator_a @ rho - prox.target_r))]
        report.max_prox_kkt = prox.kkt(p, rho) if report.converged else float("nan")
    report.iterations = done
    report.fixed_point_gap = gaps[:done].tolist()
    return rho, report


def regularized_estimate(metric, operator_a, target_r, rho_hat, config: RegularizedConfig | None = None):
    """Minimizer over ``rho >= 0`` of ``||rho - rho_hat||_M^2 + mu ||A rho - r||^2``.

    This is ``prox_{(mu/2) g}(rho_hat)``: one NNLS solve.
    """
    config = config or RegularizedConfig()
    return prox_g(metric, operator_a, target_r, config.mu / 2.0, rho_hat)
