"""Nonnegative least squares, projections onto V_d and K_d, and the POCS baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "NnlsError",
    "NnlsResult",
    "FeasibilityProblem",
    "PocsResult",
    "nnls",
    "nnls_gram",
    "kkt_violation",
    "project_affine",
    "project_cone",
    "pocs_baseline",
]

log = logging.getLogger(__name__)


class NnlsError(RuntimeError):
    """Active-set iteration hit its limit (numerical degeneracy)."""


@dataclass(frozen=True)
class NnlsResult:
    solution: np.ndarray
    residual_norm: float
    active_set: np.ndarray
    iterations: int
    passive: np.ndarray = field(repr=False, default=None)


def _default_tol(rhs):
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    return 1e-10 * scale if scale > 0 else 1e-300


def nnls(design, target, tol: float | None = None, max_iter: int | None = None) -> NnlsResult:
    """Solve ``min ||B x - b||_2`` subject to ``x >= 0`` (Lawson-Hanson).

    Parameters
    ----------
    design : array_like, shape (m, n)
        Design matrix ``B``.
    target : array_like, shape (m,)
        Right-hand side ``b``.
    tol : float, optional
        Dual feasibility tolerance; defaults to ``1e-10 * ||B^T b||_inf``.
    max_iter : int, optional
        Limit on passive-set solves, ``10 * n`` by default.

    Raises
    ------
    NnlsError
        If the iteration limit is reached.
    """
    b_mat = np.ascontiguousarray(design, dtype=float)
    b_vec = np.ascontiguousarray(target, dtype=float)
    if b_mat.ndim != 2 or b_mat.shape[1] < 1:
        raise ValueError(f"design must be a 2-D array with at least one column, got {b_mat.shape}")
    if b_vec.shape != (b_mat.shape[0],):
        raise ValueError(f"target has shape {b_vec.shape}, expected ({b_mat.shape[0]},)")
    n = b_mat.shape[1]
    if tol is None:
        tol = _default_tol(b_mat.T @ b_vec)
    if max_iter is None:
        max_iter = 10 * n
    x, passive, iters, status = _kernels.lawson_hanson(b_mat, b_vec, float(tol), int(max_iter))
    if status:
        raise NnlsError(f"NNLS iteration limit ({max_iter}) reached")
    resid = float(np.linalg.norm(b_mat @ x - b_vec))
    return NnlsResult(x, resid, np.flatnonzero(~passive), int(iters), passive)


def nnls_gram(gram, rhs, tol: float | None = None, max_iter: int | None = None,
              passive=None, target_norm_sq: float | None = None) -> NnlsResult:
    """NNLS given only ``Q = B^T B`` (positive definite) and ``c = B^T b``.

    Minimizes ``y^T Q y - 2 c^T y`` over ``y >= 0``, which has the same
    minimizers as ``||B y - b||^2``. ``passive`` optionally warm-starts the
    active set from a previous, nearby solve. ``residual_norm`` is reported
    only when ``target_norm_sq = ||b||^2`` is supplied (NaN otherwise).
    """
    q_mat = np.ascontiguousarray(gram, dtype=float)
    c_vec = np.ascontiguousarray(rhs, dtype=float)
    n = q_mat.shape[0]
    if q_mat.shape != (n, n) or c_vec.shape != (n,):
        raise ValueError(f"inconsistent shapes {q_mat.shape} and {c_vec.shape}")
    if tol is None:
        tol = _default_tol(c_vec)
    if max_iter is None:
        max_iter = 10 * n
    if passive is None:
        passive = np.zeros(n, dtype=bool)
    passive = np.ascontiguousarray(passive, dtype=bool)
    x, passive, iters, status = _kernels.active_set_gram(q_mat, c_vec, passive, float(tol), int(max_iter))
    if status:
        raise NnlsError(f"NNLS iteration limit ({max_iter}) reached")
    resid = float("nan")
    if target_norm_sq is not None:
        resid = float(np.sqrt(max(x @ q_mat @ x - 2.0 * c_vec @ x + target_norm_sq, 0.0)))
    return NnlsResult(x, resid, np.flatnonzero(~passive), int(iters), passive)


def kkt_violation(gradient, x) -> float:
    """Largest violation of the NNLS optimality conditions.

    ``gradient`` is the objective gradient at ``x``; it must be
    nonnegative where ``x == 0`` and vanish where ``x > 0``.
    """
    gradient = np.asarray(gradient, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        return float("inf")
    free = x > 0
    off = np.abs(gradient[free]).max(initial=0.0)
    on = np.maximum(-gradient[~free], 0.0).max(initial=0.0)
    return float(max(off, on))


class FeasibilityProblem:
    """The affine set ``V_d = {rho : A rho = r}`` with a cached pseudo-inverse.

    The pseudo-inverse comes from an SVD truncated at ``1e-12`` relative to
    the largest singular value.
    """

    def __init__(self, operator_a, target_r, rcond: float = 1e-12):
        a = np.array(operator_a, dtype=float)
        r = np.array(target_r, dtype=float)
        if a.ndim != 2 or r.shape != (a.shape[0],):
            raise ValueError(f"operator shape {a.shape} incompatible with target shape {r.shape}")
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
        self.operator_a = a
        self.target_r = r
        self.rank = int(keep.sum())
        self.pseudo_inverse = np.ascontiguousarray((vt[keep].T / s[keep]) @ u[:, keep].T)
        for arr in (self.operator_a, self.target_r, self.pseudo_inverse):
            arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.operator_a.shape[1]

    def residual(self, x) -> float:
        return float(np.linalg.norm(self.operator_a @ x - self.target_r))


def project_affine(problem: FeasibilityProblem, x) -> np.ndarray:
    """Euclidean projection ``x - A^+ (A x - r)`` onto ``V_d``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dimension,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.dimension},)")
    return x - problem.pseudo_inverse @ (problem.operator_a @ x - problem.target_r)


def project_cone(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


@dataclass
class PocsResult:
    solution: np.ndarray
    converged: bool
    iterations: int
    residuals: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    min_entries: np.ndarray = field(repr=False)
    iterates: np.ndarray | None = field(repr=False, default=None)

    def trace_rows(self):
        for k in range(self.iterations):
            yield k + 1, float(self.residuals[k]), float(self.min_entries[k])


def pocs_baseline(problem: FeasibilityProblem, x0=None, max_iters: int = 500, tol: float = 1e-8,
                  relaxation: float = 1.0, keep_iterates: bool = False) -> PocsResult:
    """Relaxed alternating projections between ``V_d`` and ``K_d``.

    Iterates ``x <- x + relaxation * (P_K(P_V(x)) - x)`` until the relative
    residual ``||Ax - r|| / ||r||`` and the negativity of ``x`` both fall
    below ``tol``. Always returns ``P_K`` of the last iterate; whether the
    stopping rule fired is reported in ``converged``.

    With ``keep_iterates`` the (cone-projected) iterate after every step is
    stored, which the experiment harness uses for NMSE curves.
    """
    if not 0.0 < relaxation <= 2.0:
        raise ValueError(f"relaxation must lie in (0, 2], got {relaxation}")
    n = problem.dimension
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({n},)")
    x = np.ascontiguousarray(x)
    residuals = np.empty(max_iters)
    distances = np.empty(max_iters)
    mins = np.empty(max_iters)
    r_norm = float(np.linalg.norm(problem.target_r)) or 1.0
    if problem.residual(x) <= tol * r_norm and x.min(initial=0.0) >= -tol:
        return PocsResult(project_cone(x), True, 0, residuals[:0], distances[:0], mins[:0],
                          np.empty((0, n)) if keep_iterates else None)
    a = np.ascontiguousarray(problem.operator_a)
    pinv = problem.pseudo_inverse
    r = np.ascontiguousarray(problem.target_r)
    if not keep_iterates:
        steps = _kernels.pocs_sweep(x, a, r, pinv, float(relaxation), int(max_iters), float(tol),
                                    residuals, distances, mins)
        iterates = None
    else:
        iterates = np.empty((max_iters, n))
        steps = 0
        for k in range(max_iters):
            took = _kernels.pocs_sweep(x, a, r, pinv, float(relaxation), 1, float(tol),
                                       residuals[k:k + 1], distances[k:k + 1], mins[k:k + 1])
            iterates[k] = np.maximum(x, 0.0)
            steps = k + 1
            if residuals[k] <= tol * r_norm and mins[k] >= -tol:
                break
            assert took == 1
        iterates = iterates[:steps]
    converged = bool(steps > 0 and residuals[steps - 1] <= tol * r_norm and mins[steps - 1] >= -tol)
    if not converged:
        log.debug("POCS stopped after %d steps without meeting tol=%g", steps, tol)
    return PocsResult(project_cone(x), converged, int(steps), residuals[:steps].copy(),
                      distances[:steps].copy(), mins[:steps].copy(), iterates)
