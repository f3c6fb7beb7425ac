"""Solver-versus-oracle checks on small random instances.

Each ``check_*`` function draws its own instances from ``rng`` and returns a
:class:`CheckResult`. ``run_all`` runs every check and prints one line per
check; the ``apsest oracle`` command and the acceptance tests call it.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass

import numpy as np

from .estimators import HaugazeauConfig, ProxSubproblem, RegularizedConfig, haugazeau_estimate, regularized_estimate
from .oracles import hierarchical_enumerate, nnls_enumerate, prox_projected_gradient, random_instance
from .solvers import FeasibilityProblem, kkt_violation, nnls, pocs_baseline

__all__ = [
    "CheckResult",
    "check_nnls",
    "check_prox",
    "check_haugazeau",
    "check_constant_row",
    "check_firm_nonexpansive",
    "run_all",
]

# KKT tolerance relative to the size of the linear term
KKT_REL_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    count: int
    seconds: float
    max_kkt: float = 0.0
    note: str = ""

    def detail(self) -> str:
        extra = f"; {self.note}" if self.note else ""
        return (f"worst {self.worst:.3e} (tol {self.tolerance:.0e}) over {self.count} instances, "
                f"max KKT {self.max_kkt:.2e}, {self.seconds:.2f} s{extra}")

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail()}"


def _m_norm(m, v):
    return float(np.sqrt(max(v @ m @ v, 0.0)))


def _prox_kkt(prox: ProxSubproblem, y, x) -> float:
    """KKT violation of a prox output, relative to ``1 + ||c||_inf``."""
    return prox.kkt(y, x) / (1.0 + float(np.abs(prox.rhs(x)).max()))


def check_nnls(rng, count: int = 50, tol: float = 1e-8) -> CheckResult:
    """Lawson-Hanson objective against exhaustive support enumeration (at most 8 columns)."""
    start = time.perf_counter()
    worst = max_kkt = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(max(2, n - 3), n + 6))
        b_mat = rng.standard_normal((m, n))
        b_vec = rng.standard_normal(m)
        res = nnls(b_mat, b_vec)
        _, best = nnls_enumerate(b_mat, b_vec)
        worst = max(worst, abs(res.residual_norm ** 2 - best) / max(1.0, best))
        grad = 2.0 * b_mat.T @ (b_mat @ res.solution - b_vec)
        max_kkt = max(max_kkt, kkt_violation(grad, res.solution) / (1.0 + np.abs(b_mat.T @ b_vec).max()))
    return CheckResult("nnls vs enumeration", worst <= tol and max_kkt <= KKT_REL_TOL, worst, tol, count,
                       time.perf_counter() - start, max_kkt)


def check_prox(rng, count: int = 25, tol: float = 1e-6) -> CheckResult:
    """``prox_g`` against projected gradient, distance in the ``M`` norm (D = 6)."""
    start = time.perf_counter()
    worst = max_kkt = 0.0
    for _ in range(count):
        inst = random_instance(rng)
        gamma = float(rng.choice([0.1, 1.0, 5.0, 20.0]))
        x = rng.normal(0.5, 1.0, inst.truth.size)
        prox = ProxSubproblem(inst.metric_m, inst.operator_a, inst.target_r, gamma)
        y = prox(x)
        ref, _ = prox_projected_gradient(inst.metric_m, inst.operator_a, inst.target_r, gamma, x)
        worst = max(worst, _m_norm(inst.metric_m, y - ref))
        max_kkt = max(max_kkt, _prox_kkt(prox, y, x))
    return CheckResult("prox vs projected gradient", worst <= tol and max_kkt <= KKT_REL_TOL, worst, tol, count,
                       time.perf_counter() - start, max_kkt)


def check_haugazeau(rng, count: int = 10, tol: float = 1e-4, gammas=(1.0, 5.0, 20.0),
                    max_iterations: int = 200_000) -> CheckResult:
    """Haugazeau limits against the hierarchical oracle, and across ``gammas``.

    ``worst`` is the larger of the oracle distance and the pairwise spread
    between step sizes, both in the ``M`` norm.
    """
    start = time.perf_counter()
    worst = spread = max_kkt = 0.0
    unconverged = 0
    for _ in range(count):
        inst = random_instance(rng)
        ref, _ = hierarchical_enumerate(inst.metric_m, inst.operator_a, inst.target_r, inst.rho_hat)
        limits = []
        for gamma in gammas:
            est, rep = haugazeau_estimate(inst.metric_m, inst.operator_a, inst.target_r, inst.rho_hat,
                                          HaugazeauConfig(gamma, max_iterations))
            unconverged += not rep.converged
            if rep.converged:
                max_kkt = max(max_kkt, rep.max_prox_kkt / (1.0 + np.abs(inst.operator_a.T @ inst.target_r).max()))
            limits.append(est)
            worst = max(worst, _m_norm(inst.metric_m, est - ref))
        for i in range(len(limits)):
            for j in range(i + 1, len(limits)):
                spread = max(spread, _m_norm(inst.metric_m, limits[i] - limits[j]))
    note = f"gamma spread {spread:.2e}"
    if unconverged:
        note += f", iteration limit reached in {unconverged} of {count * len(gammas)} runs"
    return CheckResult("haugazeau vs hierarchical oracle", max(worst, spread) <= tol and max_kkt <= KKT_REL_TOL,
                       max(worst, spread), tol, count, time.perf_counter() - start, max_kkt, note)


def check_constant_row(rng, count: int = 20, tol: float = 1e-8) -> CheckResult:
    """``|c_w ||x||_1 - r_const|`` for every feasible algorithm output on exact data."""
    start = time.perf_counter()
    worst = 0.0
    feasible = total = 0
    for _ in range(count):
        inst = random_instance(rng)
        a, r, m = inst.operator_a, inst.target_r, inst.metric_m
        outputs = [
            haugazeau_estimate(m, a, r, inst.rho_hat, HaugazeauConfig(5.0, 200_000))[0],
            regularized_estimate(m, a, r, inst.rho_hat, RegularizedConfig(5e4)),
            regularized_estimate(m, a, r, inst.rho_hat, RegularizedConfig(1.0)),
            pocs_baseline(FeasibilityProblem(a, r), max_iters=20_000, tol=1e-12).solution,
            nnls(a, r).solution,
        ]
        for x in outputs:
            total += 1
            if np.linalg.norm(a @ x - r) <= 1e-8:
                feasible += 1
                gap = abs(inst.weight * np.abs(x).sum() - r[inst.constant_row_index])
                worst = max(worst, gap)
    return CheckResult("constant-row mass identity", worst <= tol and feasible > 0, worst, tol, count,
                       time.perf_counter() - start, note=f"{feasible}/{total} outputs feasible at 1e-8")


def check_firm_nonexpansive(rng, pairs: int = 100, slack: float = 1e-9) -> CheckResult:
    """``||p(x) - p(y)||_M^2 <= <p(x) - p(y), x - y>_M`` on random pairs.

    ``worst`` is the largest excess of the left side over the right side.
    """
    start = time.perf_counter()
    worst = -np.inf
    max_kkt = 0.0
    for _ in range(pairs):
        inst = random_instance(rng)
        gamma = float(rng.choice([0.1, 1.0, 5.0, 20.0]))
        prox = ProxSubproblem(inst.metric_m, inst.operator_a, inst.target_r, gamma)
        x, y = rng.normal(0.3, 1.0, (2, inst.truth.size))
        px, py = prox(x, warm_start=False), prox(y, warm_start=False)
        max_kkt = max(max_kkt, _prox_kkt(prox, px, x), _prox_kkt(prox, py, y))
        dp, dx = px - py, x - y
        m = inst.metric_m
        worst = max(worst, float(dp @ m @ dp - dp @ m @ dx))
    return CheckResult("prox firm nonexpansiveness", worst <= slack and max_kkt <= KKT_REL_TOL, worst, slack,
                       pairs, time.perf_counter() - start, max_kkt)


def run_all(seed: int = 0, count: int | None = None, out=sys.stdout) -> bool:
    """Run every check with its own seeded stream; ``count`` caps instances per check."""

    def n(default):
        return default if count is None else min(default, count)

    checks = [
        (check_nnls, n(50)),
        (check_prox, n(25)),
        (check_haugazeau, n(10)),
        (check_constant_row, n(20)),
        (check_firm_nonexpansive, n(100)),
    ]
    ok = True
    for i, (fn, k) in enumerate(checks):
        result = fn(np.random.default_rng([seed, i]), k)
        print(result.line(), file=out)
        ok &= result.passed
    return ok
