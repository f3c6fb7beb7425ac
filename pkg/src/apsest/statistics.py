"""Dataset moments and the regularized Mahalanobis metric."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetStatistics",
    "MahalanobisMetric",
    "compute_statistics",
    "build_metric",
    "metric_inner",
    "metric_norm",
    "metric_distance",
    "save_statistics",
    "load_statistics",
]


@dataclass(frozen=True)
class DatasetStatistics:
    mean: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)
    sample_count: int

    @property
    def spectral_norm(self) -> float:
        """Largest eigenvalue of the (PSD) covariance."""
        return float(max(np.linalg.eigvalsh(self.covariance)[-1], 0.0))


@dataclass(frozen=True)
class MahalanobisMetric:
    """Positive definite ``M = (C + alpha I)^{-1}``, optionally scaled to unit spectral norm."""

    matrix_m: np.ndarray = field(repr=False)
    alpha: float
    cholesky_factor: np.ndarray = field(repr=False)
    normalized: bool

    @property
    def dimension(self) -> int:
        return self.matrix_m.shape[0]

    @classmethod
    def identity(cls, dimension: int) -> "MahalanobisMetric":
        eye = np.eye(dimension)
        return cls(eye, np.inf, eye.copy(), True)

    @classmethod
    def from_matrix(cls, matrix, alpha: float = float("nan"), normalized: bool = False):
        m = np.array(matrix, dtype=float)
        m = 0.5 * (m + m.T)
        return cls(m, alpha, np.linalg.cholesky(m), normalized)


def compute_statistics(dataset) -> DatasetStatistics:
    """Sample mean and unbiased sample covariance of the rows of ``dataset``."""
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2:
        data = np.stack([np.asarray(v, dtype=float) for v in dataset])
    count = data.shape[0]
    if count < 2:
        raise ValueError(f"need at least 2 samples for a covariance estimate, got {count}")
    if np.any(data < 0):
        warnings.warn("dataset contains negative APS entries", RuntimeWarning, stacklevel=2)
    mean = data.mean(axis=0)
    centred = data - mean
    cov = centred.T @ centred / (count - 1)
    cov = 0.5 * (cov + cov.T)
    return DatasetStatistics(mean, cov, count)


def build_metric(stats: DatasetStatistics, alpha: float, normalize: bool = True) -> MahalanobisMetric:
    """``M_alpha = (C + alpha I)^{-1}`` through the eigendecomposition of ``C``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    evals, evecs = np.linalg.eigh(stats.covariance)
    evals = np.clip(evals, 0.0, None)
    inv = 1.0 / (evals + alpha)
    if normalize:
        inv = inv / inv.max()
    m = (evecs * inv) @ evecs.T
    m = 0.5 * (m + m.T)
    return MahalanobisMetric(m, float(alpha), np.linalg.cholesky(m), bool(normalize))


def _check(metric, *vectors):
    for v in vectors:
        if v.shape != (metric.dimension,):
            raise ValueError(f"vector has shape {v.shape}, metric dimension is {metric.dimension}")


def metric_inner(metric: MahalanobisMetric, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check(metric, x, y)
    return float(x @ metric.matrix_m @ y)


def metric_norm(metric: MahalanobisMetric, x) -> float:
    x = np.asarray(x, dtype=float)
    _check(metric, x)
    return float(np.linalg.norm(metric.cholesky_factor.T @ x))


def metric_distance(metric: MahalanobisMetric, x, y) -> float:
    return metric_norm(metric, np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


def save_statistics(stats: DatasetStatistics, directory) -> Path:
    """Write ``mean.csv``, ``covariance.csv`` and ``meta.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "mean.csv", stats.mean[None, :], delimiter=",", fmt="%.17g")
    np.savetxt(directory / "covariance.csv", stats.covariance, delimiter=",", fmt="%.17g")
    meta = {"sample_count": stats.sample_count, "dimension": int(stats.mean.size)}
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return directory


def load_statistics(directory) -> DatasetStatistics:
    directory = Path(directory)
    mean = np.loadtxt(directory / "mean.csv", delimiter=",", ndmin=1)
    cov = np.loadtxt(directory / "covariance.csv", delimiter=",", ndmin=2)
    meta = json.loads((directory / "meta.json").read_text())
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"{directory}: covariance shape {cov.shape} does not match mean length {mean.size}")
    return DatasetStatistics(mean, cov, int(meta["sample_count"]))
