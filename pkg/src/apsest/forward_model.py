"""Angular grid, ULA forward operator and Toeplitz covariance vectorization.

The covariance of a uniform linear array is Hermitian Toeplitz, so it is
fully described by its first row ``t[0..N-1]`` (``R[i, i + l] = t[l]``).
The real vector used throughout the package stacks the unique entries as::

    [Re t0, Re t1, ..., Re t(N-1), Im t1, ..., Im t(N-1)]

which has ``2N - 1`` entries.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ArrayConfig",
    "AngularGrid",
    "ForwardOperator",
    "HermitianToeplitzCovariance",
    "build_grid",
    "build_ula_operator",
    "apply",
    "vectorize",
    "devectorize",
    "toeplitz_project",
    "steering_vector",
    "save_operator",
    "load_operator",
]


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array with isotropic elements.

    ``antenna_spacing_m`` defaults to half a wavelength.
    """

    num_antennas: int = 16
    carrier_frequency_hz: float = 2.11e9
    wave_speed_m_s: float = 3e8
    antenna_spacing_m: float | None = None

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ValueError(f"num_antennas must be an integer >= 2, got {self.num_antennas}")
        if not (self.carrier_frequency_hz > 0 and self.wave_speed_m_s > 0):
            raise ValueError("carrier frequency and wave speed must be positive")
        if self.antenna_spacing_m is None:
            object.__setattr__(
                self, "antenna_spacing_m", self.wave_speed_m_s / (2.0 * self.carrier_frequency_hz)
            )
        if not self.antenna_spacing_m > 0:
            raise ValueError("antenna spacing must be positive")
        object.__setattr__(self, "num_antennas", int(self.num_antennas))

    @property
    def wavelength_m(self) -> float:
        return self.wave_speed_m_s / self.carrier_frequency_hz

    @property
    def spacing_ratio(self) -> float:
        """Element spacing in wavelengths (d / lambda)."""
        return self.antenna_spacing_m / self.wavelength_m

    @property
    def vector_length(self) -> int:
        return 2 * self.num_antennas - 1


@dataclass(frozen=True)
class AngularGrid:
    """Midpoint-rule grid on ``[lower_rad, upper_rad]``."""

    lower_rad: float
    upper_rad: float
    num_points: int
    angles_rad: np.ndarray = field(repr=False, compare=False)
    weight: float

    def __eq__(self, other):
        if not isinstance(other, AngularGrid):
            return NotImplemented
        return (self.lower_rad, self.upper_rad, self.num_points) == (
            other.lower_rad,
            other.upper_rad,
            other.num_points,
        )

    def __hash__(self):
        return hash((self.lower_rad, self.upper_rad, self.num_points))


def build_grid(lower_rad: float = -np.pi / 2, upper_rad: float = np.pi / 2,
               num_points: int = 180) -> AngularGrid:
    """Build a uniform midpoint grid with ``num_points`` cells.

    ``theta_i = lower + (i - 1/2) * (upper - lower) / D`` and every point
    carries the quadrature weight ``(upper - lower) / D``.

    Examples
    --------
    >>> g = build_grid(0.0, 1.0, 2)
    >>> g.angles_rad.tolist(), g.weight
    ([0.25, 0.75], 0.5)
    """
    lower_rad = float(lower_rad)
    upper_rad = float(upper_rad)
    if not lower_rad < upper_rad:
        raise ValueError(f"invalid bounds: lower={lower_rad} must be < upper={upper_rad}")
    if int(num_points) != num_points or num_points < 2:
        raise ValueError(f"num_points must be an integer >= 2, got {num_points}")
    num_points = int(num_points)
    weight = (upper_rad - lower_rad) / num_points
    angles = lower_rad + (np.arange(num_points) + 0.5) * weight
    angles.setflags(write=False)
    return AngularGrid(lower_rad, upper_rad, num_points, angles, weight)


@dataclass(frozen=True)
class ForwardOperator:
    """Real ``(2N-1) x D`` matrix mapping a discrete APS to a covariance vector."""

    matrix_a: np.ndarray = field(repr=False)
    grid: AngularGrid
    array: ArrayConfig
    constant_row_index: int = 0

    @property
    def shape(self):
        return self.matrix_a.shape

    @property
    def num_antennas(self) -> int:
        return self.array.num_antennas

    @property
    def num_points(self) -> int:
        return self.grid.num_points


@dataclass(frozen=True)
class HermitianToeplitzCovariance:
    """Hermitian Toeplitz matrix stored by its first row ``R[0, :]``."""

    first_row: np.ndarray

    def __post_init__(self):
        row = np.array(self.first_row, dtype=complex).reshape(-1)
        if row.size < 1:
            raise ValueError("empty first row")
        row[0] = row[0].real
        row.setflags(write=False)
        object.__setattr__(self, "first_row", row)

    @property
    def dimension(self) -> int:
        return self.first_row.size

    def to_matrix(self) -> np.ndarray:
        n = self.dimension
        idx = np.arange(n)
        lag = idx[None, :] - idx[:, None]
        out = self.first_row[np.abs(lag)].copy()
        lower = lag < 0
        out[lower] = np.conj(out[lower])
        return out


def steering_vector(array: ArrayConfig, theta: float) -> np.ndarray:
    """Far-field ULA response ``a_n = exp(-j 2 pi (d/lambda) n sin theta)``.

    With this convention ``a a^H`` has first row
    ``exp(+j 2 pi (d/lambda) l sin theta)``, matching the rows of ``A``.
    """
    n = np.arange(array.num_antennas)
    return np.exp(-2j * np.pi * array.spacing_ratio * n * np.sin(theta))


def build_ula_operator(array: ArrayConfig, grid: AngularGrid) -> ForwardOperator:
    """Discretize the ULA covariance map on ``grid``.

    Row ``l`` (``0 <= l < N``) holds ``c_w cos(2 pi (d/lambda) l sin theta_i)``
    and row ``N + l - 1`` (``1 <= l < N``) holds the matching sine. Row 0 is
    the constant row ``c_w * 1``.
    """
    n_ant = array.num_antennas
    lags = np.arange(n_ant)[:, None]
    phase = 2.0 * np.pi * array.spacing_ratio * lags * np.sin(grid.angles_rad)[None, :]
    a = np.empty((2 * n_ant - 1, grid.num_points))
    a[:n_ant] = grid.weight * np.cos(phase)
    a[n_ant:] = grid.weight * np.sin(phase[1:])
    # exact, independent of cos(0) rounding
    a[0] = grid.weight
    a.setflags(write=False)
    return ForwardOperator(a, grid, array, 0)


def apply(op: ForwardOperator, aps) -> np.ndarray:
    """Covariance vector ``r = A rho``."""
    aps = np.asarray(aps, dtype=float)
    if aps.shape != (op.num_points,):
        raise ValueError(f"APS has shape {aps.shape}, expected ({op.num_points},)")
    return op.matrix_a @ aps


def vectorize(covariance) -> np.ndarray:
    """Stack the unique real/imaginary Toeplitz entries into a real vector.

    Accepts a :class:`HermitianToeplitzCovariance` or a square matrix, in
    which case the first row is read directly (the matrix must already be
    Hermitian Toeplitz; use :func:`toeplitz_project` otherwise).
    """
    if isinstance(covariance, HermitianToeplitzCovariance):
        row = covariance.first_row
    else:
        mat = np.asarray(covariance)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {mat.shape}")
        row = mat[0].astype(complex)
    return np.concatenate([row.real, row.imag[1:]])


def devectorize(vector) -> HermitianToeplitzCovariance:
    """Inverse of :func:`vectorize`."""
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1 or vector.size % 2 != 1:
        raise ValueError(f"covariance vector must have odd length 2N-1, got shape {vector.shape}")
    n = (vector.size + 1) // 2
    row = vector[:n].astype(complex)
    row[1:] += 1j * vector[n:]
    return HermitianToeplitzCovariance(row)


def toeplitz_project(matrix) -> HermitianToeplitzCovariance:
    """Orthogonal projection onto Hermitian Toeplitz matrices (trace inner product).

    Lag ``l`` becomes the mean of the ``l``-th superdiagonal and the conjugated
    ``l``-th subdiagonal; for Hermitian input both means agree.
    """
    mat = np.asarray(matrix, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    n = mat.shape[0]
    row = np.empty(n, dtype=complex)
    for lag in range(n):
        upper = np.diagonal(mat, offset=lag)
        lower = np.diagonal(mat, offset=-lag)
        row[lag] = 0.5 * (upper.mean() + np.conj(lower).mean())
    return HermitianToeplitzCovariance(row)


# -- operator cache ---------------------------------------------------------

_META_KEYS = ("num_antennas", "carrier_frequency_hz", "wave_speed_m_s", "antenna_spacing_m",
              "lower_rad", "upper_rad", "num_points", "constant_row_index")


def _operator_meta(op: ForwardOperator) -> dict:
    return {
        "num_antennas": op.array.num_antennas,
        "carrier_frequency_hz": op.array.carrier_frequency_hz,
        "wave_speed_m_s": op.array.wave_speed_m_s,
        "antenna_spacing_m": op.array.antenna_spacing_m,
        "lower_rad": op.grid.lower_rad,
        "upper_rad": op.grid.upper_rad,
        "num_points": op.grid.num_points,
        "constant_row_index": op.constant_row_index,
    }


def _operator_from(meta: dict, matrix: np.ndarray) -> ForwardOperator:
    array = ArrayConfig(int(meta["num_antennas"]), float(meta["carrier_frequency_hz"]),
                        float(meta["wave_speed_m_s"]), float(meta["antenna_spacing_m"]))
    grid = build_grid(float(meta["lower_rad"]), float(meta["upper_rad"]), int(meta["num_points"]))
    matrix = np.array(matrix, dtype=float)
    if matrix.shape != (array.vector_length, grid.num_points):
        raise ValueError(f"stored matrix has shape {matrix.shape}, metadata implies "
                         f"({array.vector_length}, {grid.num_points})")
    matrix.setflags(write=False)
    return ForwardOperator(matrix, grid, array, int(meta["constant_row_index"]))


def save_operator(op: ForwardOperator, path) -> Path:
    """Write ``op`` to ``path``.

    ``.csv`` files get a ``# key=value`` header line followed by one matrix
    row per line; any other suffix gets an ``.npz`` archive (written to the
    exact path given).
    """
    path = Path(path)
    meta = _operator_meta(op)
    if path.suffix.lower() == ".csv":
        header = "# " + ",".join(f"{k}={meta[k]!r}" for k in _META_KEYS)
        buf = io.StringIO()
        np.savetxt(buf, op.matrix_a, delimiter=",", fmt="%.17g")
        path.write_text(header + "\n" + buf.getvalue())
    else:
        with open(path, "wb") as fh:
            np.savez(fh, matrix_a=op.matrix_a, **{k: np.asarray(v) for k, v in meta.items()})
    return path


def load_operator(path) -> ForwardOperator:
    path = Path(path)
    if zipfile.is_zipfile(path):
        with np.load(path) as data:
            meta = {k: data[k].item() for k in _META_KEYS}
            return _operator_from(meta, data["matrix_a"])
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# key=value' header line")
        meta = {}
        for item in header[1:].split(","):
            key, _, value = item.strip().partition("=")
            meta[key] = float(value)
        missing = [k for k in _META_KEYS if k not in meta]
        if missing:
            raise ValueError(f"{path}: header lacks {missing}")
        matrix = np.loadtxt(fh, delimiter=",", ndmin=2)
    return _operator_from(meta, matrix)
