"""Synthetic angular power spectra and noisy sample covariance matrices."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .forward_model import (
    AngularGrid,
    ForwardOperator,
    HermitianToeplitzCovariance,
    apply,
    devectorize,
    toeplitz_project,
)

__all__ = [
    "ApsModelConfig",
    "ChannelSimConfig",
    "SymbolModel",
    "sample_aps",
    "sample_dataset",
    "true_covariance",
    "simulate_sample_covariance",
    "trial_rng",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class ApsModelConfig:
    """Gaussian-mixture APS model.

    The number of paths is drawn uniformly from ``num_paths_choices``, path
    centres uniformly from ``angle_interval_rad`` and raw weights uniformly
    from ``[0, 1]``.
    """

    num_paths_choices: tuple = (1, 2, 3, 4, 5)
    angle_interval_rad: tuple = (0.0, np.pi / 2)
    spread_rad: float = 0.0349
    weight_normalization: bool = True

    def __post_init__(self):
        choices = tuple(int(q) for q in self.num_paths_choices)
        interval = tuple(float(v) for v in self.angle_interval_rad)
        if not choices or min(choices) < 1:
            raise ValueError("path counts must be >= 1")
        if len(interval) != 2 or not interval[0] <= interval[1]:
            raise ValueError(f"invalid angle interval {self.angle_interval_rad}")
        if not self.spread_rad > 0:
            raise ValueError("spread_rad must be positive")
        object.__setattr__(self, "num_paths_choices", choices)
        object.__setattr__(self, "angle_interval_rad", interval)


class SymbolModel(str, enum.Enum):
    UNIT_MODULUS = "unit-modulus-random-phase"
    GAUSSIAN = "complex-gaussian"


@dataclass(frozen=True)
class ChannelSimConfig:
    num_snapshots: int = 500
    noise_variance: float = 0.1
    symbol_model: SymbolModel = SymbolModel.UNIT_MODULUS
    seed: int = 0

    def __post_init__(self):
        if int(self.num_snapshots) != self.num_snapshots or self.num_snapshots < 1:
            raise ValueError("num_snapshots must be a positive integer")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        object.__setattr__(self, "symbol_model", SymbolModel(self.symbol_model))


def trial_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator for the stream labelled ``(seed, *stream)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


def mixture_density(theta, centres, weights, spread):
    theta = np.asarray(theta, dtype=float)
    diff = theta[..., None] - np.asarray(centres)
    norm = 1.0 / np.sqrt(2.0 * np.pi * spread**2)
    return (np.asarray(weights) * norm * np.exp(-(diff**2) / (2.0 * spread**2))).sum(axis=-1)


def sample_aps(model: ApsModelConfig, grid: AngularGrid, rng: np.random.Generator,
               return_params: bool = False):
    """Draw one APS from the mixture model, evaluated at the grid points."""
    q = int(rng.choice(model.num_paths_choices))
    low, high = model.angle_interval_rad
    centres = rng.uniform(low, high, size=q)
    weights = rng.uniform(0.0, 1.0, size=q)
    if model.weight_normalization:
        total = weights.sum()
        # all-zero draw has probability zero; fall back to equal weights
        weights = weights / total if total > 0 else np.full(q, 1.0 / q)
    aps = mixture_density(grid.angles_rad, centres, weights, model.spread_rad)
    if return_params:
        return aps, {"centres": centres, "weights": weights}
    return aps


def sample_dataset(model: ApsModelConfig, grid: AngularGrid, count: int, seed: int) -> np.ndarray:
    """``count`` APS draws stacked as rows, reproducible from ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = trial_rng(seed, 0)
    return np.stack([sample_aps(model, grid, rng) for _ in range(count)])


def true_covariance(op: ForwardOperator, aps) -> HermitianToeplitzCovariance:
    return devectorize(apply(op, aps))


def _draw_symbols(model: SymbolModel, k: int, rng: np.random.Generator) -> np.ndarray:
    if model is SymbolModel.UNIT_MODULUS:
        return np.exp(2j * np.pi * rng.uniform(size=k))
    return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)


def _cn(rng, shape, variance=1.0):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_sample_covariance(true_cov, sim: ChannelSimConfig,
                               rng: np.random.Generator) -> HermitianToeplitzCovariance:
    """Noise-corrected, Toeplitz-projected sample covariance of ``K`` snapshots.

    Channels are ``h = U S^{1/2} w`` with ``w ~ CN(0, I)``; observations are
    ``y = h s + n`` with ``n ~ CN(0, sigma^2 I)``. The estimate is
    ``P_T((1/K) sum y y^H - sigma^2 I)``. Negative eigenvalues of the result
    are kept.
    """
    if isinstance(true_cov, HermitianToeplitzCovariance):
        mat = true_cov.to_matrix()
    else:
        mat = np.asarray(true_cov, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    scale = max(1.0, np.abs(mat).max())
    if np.abs(mat - mat.conj().T).max() > 1e-10 * scale:
        raise ValueError("covariance is not Hermitian")
    n = mat.shape[0]
    k = sim.num_snapshots

    evals, evecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    w = _cn(rng, (n, k))
    h = root @ w
    s = _draw_symbols(sim.symbol_model, k, rng)
    y = h * s[None, :]
    if sim.noise_variance > 0:
        y = y + _cn(rng, (n, k), sim.noise_variance)
    sample = (y @ y.conj().T) / k - sim.noise_variance * np.eye(n)
    return toeplitz_project(sample)


# -- dataset files ------------------------------------------------------------

def save_dataset(samples: np.ndarray, path, grid: AngularGrid, model: ApsModelConfig,
                 seed: int) -> tuple[Path, Path]:
    """Write one CSV row per APS sample plus a ``.meta.json`` sidecar."""
    path = Path(path)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    np.savetxt(path, samples, delimiter=",", fmt="%.17g")
    meta = {
        "lower_rad": grid.lower_rad,
        "upper_rad": grid.upper_rad,
        "num_points": grid.num_points,
        "count": int(samples.shape[0]),
        "seed": int(seed),
        "aps_model": asdict(model),
    }
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, meta_path


def load_dataset(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    samples = np.loadtxt(path, delimiter=",", ndmin=2)
    meta_path = path.with_name(path.name + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if meta and samples.shape[1] != meta["num_points"]:
        raise ValueError(f"{path}: {samples.shape[1]} columns but metadata says D={meta['num_points']}")
    return samples, meta
