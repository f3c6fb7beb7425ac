"""Brute-force reference solvers for small instances.

None of these touch the active-set kernels; they exist to check them.
Everything here is exponential or slow and meant for ``D <= 10``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .forward_model import ArrayConfig, build_grid, build_ula_operator

__all__ = [
    "SmallInstance",
    "random_instance",
    "random_metric",
    "nnls_enumerate",
    "prox_projected_gradient",
    "hierarchical_enumerate",
    "nnls_projected_gradient",
]


def _subsets(n):
    for size in range(n + 1):
        yield from itertools.combinations(range(n), size)


def nnls_enumerate(design, target):
    """Exact NNLS by trying every support set.

    For each support ``P`` the unconstrained least-squares solution on the
    columns ``P`` is computed; among the nonnegative ones the best objective
    wins. Returns ``(x, objective)`` with objective ``||Bx - b||^2``.
    """
    b_mat = np.asarray(design, dtype=float)
    b_vec = np.asarray(target, dtype=float)
    n = b_mat.shape[1]
    best_x = np.zeros(n)
    best = float(b_vec @ b_vec)
    for support in _subsets(n):
        if not support:
            continue
        cols = list(support)
        sol = np.linalg.lstsq(b_mat[:, cols], b_vec, rcond=None)[0]
        if np.any(sol < -1e-12):
            continue
        x = np.zeros(n)
        x[cols] = np.maximum(sol, 0.0)
        resid = b_mat @ x - b_vec
        val = float(resid @ resid)
        if val < best:
            best, best_x = val, x
    return best_x, best


def nnls_projected_gradient(design, target, iterations: int = 100_000):
    """Plain projected gradient on ``||Bx - b||^2`` with step ``1 / ||B||_2^2``."""
    b_mat = np.asarray(design, dtype=float)
    b_vec = np.asarray(target, dtype=float)
    step = 1.0 / np.linalg.norm(b_mat, 2) ** 2
    gram = b_mat.T @ b_mat
    rhs = b_mat.T @ b_vec
    x = np.zeros(b_mat.shape[1])
    for _ in range(iterations):
        x = np.maximum(x - step * (gram @ x - rhs), 0.0)
    resid = b_mat @ x - b_vec
    return x, float(resid @ resid)


def prox_projected_gradient(metric_m, operator_a, target_r, gamma, x, grad_tol: float = 1e-12,
                            max_iter: int = 1_000_000):
    """Projected gradient on ``||Ay - r||^2 + ||y - x||_M^2 / (2 gamma)`` over ``y >= 0``.

    Stops when the projected-gradient step moves the iterate by less than
    ``grad_tol`` (scaled by the step) or after ``max_iter`` steps.
    """
    a = np.asarray(operator_a, dtype=float)
    m = np.asarray(metric_m, dtype=float)
    w = 1.0 / (2.0 * gamma)
    hess = 2.0 * (a.T @ a + w * m)
    lin = 2.0 * (a.T @ np.asarray(target_r, dtype=float) + w * (m @ np.asarray(x, dtype=float)))
    step = 1.0 / np.linalg.eigvalsh(hess)[-1]
    y = np.maximum(np.asarray(x, dtype=float), 0.0)
    for k in range(max_iter):
        y_new = np.maximum(y - step * (hess @ y - lin), 0.0)
        moved = np.linalg.norm(y_new - y) / step
        y = y_new
        if moved <= grad_tol:
            break
    return y, k + 1


def hierarchical_enumerate(metric_m, operator_a, target_r, rho_hat, feas_tol: float = 1e-9):
    """``argmin ||rho - rho_hat||_M`` over ``{rho >= 0 : A rho = r}`` by support enumeration.

    For each support the equality-constrained problem is solved from its KKT
    system; the feasible candidate with the smallest objective is optimal.
    Returns ``(rho, objective)`` or raises if no support is feasible.
    """
    a = np.asarray(operator_a, dtype=float)
    m = np.asarray(metric_m, dtype=float)
    r = np.asarray(target_r, dtype=float)
    rho_hat = np.asarray(rho_hat, dtype=float)
    n_rows, d = a.shape
    scale = max(1.0, float(np.abs(r).max()))
    best = None
    for support in _subsets(d):
        p = list(support)
        k = len(p)
        kkt = np.zeros((k + n_rows, k + n_rows))
        kkt[:k, :k] = m[np.ix_(p, p)]
        kkt[:k, k:] = a[:, p].T
        kkt[k:, :k] = a[:, p]
        rhs = np.concatenate([(m @ rho_hat)[p], r])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        if np.linalg.norm(kkt @ sol - rhs) > feas_tol * scale * 10:
            continue
        rho = np.zeros(d)
        rho[p] = sol[:k]
        if rho.min(initial=0.0) < -1e-12 or np.linalg.norm(a @ rho - r) > feas_tol * scale:
            continue
        rho = np.maximum(rho, 0.0)
        diff = rho - rho_hat
        val = float(diff @ m @ diff)
        if best is None or val < best[1]:
            best = (rho, val)
    if best is None:
        raise ValueError("no feasible support: A rho = r has no nonnegative solution")
    return best


@dataclass(frozen=True)
class SmallInstance:
    operator_a: np.ndarray
    metric_m: np.ndarray
    truth: np.ndarray
    target_r: np.ndarray
    rho_hat: np.ndarray
    constant_row_index: int
    weight: float


def random_metric(rng, dim: int) -> np.ndarray:
    """Random symmetric positive definite matrix with unit spectral norm."""
    b = rng.standard_normal((dim, dim))
    m = b @ b.T / dim + 0.3 * np.eye(dim)
    return m / np.linalg.eigvalsh(m)[-1]


def random_instance(rng, num_points: int = 6, num_antennas: int = 2,
                    sparse: bool = False) -> SmallInstance:
    """Consistent ULA instance ``r = A rho_d`` with ``rho_d >= 0`` on a coarse grid.

    The measurement has ``2N - 1 < D`` rows so the solution set is not a
    single point in general. By default ``rho_d`` is strictly positive, like
    the Gaussian-mixture spectra; ``sparse=True`` zeroes about 40% of the
    entries, which tends to make the solution set a single vertex.
    """
    grid = build_grid(-np.pi / 2, np.pi / 2, num_points)
    op = build_ula_operator(ArrayConfig(num_antennas), grid)
    if sparse:
        truth = rng.uniform(0.0, 1.0, num_points) * (rng.uniform(size=num_points) < 0.6)
        if not truth.any():
            truth[rng.integers(num_points)] = 1.0
    else:
        truth = rng.uniform(0.1, 1.0, num_points)
    rho_hat = rng.uniform(0.0, 1.0, num_points)
    return SmallInstance(np.array(op.matrix_a), random_metric(rng, num_points), truth,
                         op.matrix_a @ truth, rho_hat, op.constant_row_index, grid.weight)
