import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsest.forward_model import (
    ArrayConfig,
    HermitianToeplitzCovariance,
    apply,
    build_grid,
    build_ula_operator,
    devectorize,
    load_operator,
    save_operator,
    steering_vector,
    toeplitz_project,
    vectorize,
)
from apsest.synthesis import ApsModelConfig, sample_aps


def random_toeplitz(rng, n):
    row = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return HermitianToeplitzCovariance(row)


def small_operator(num_antennas, num_points, lower=-np.pi / 2, upper=np.pi / 2):
    return build_ula_operator(ArrayConfig(num_antennas), build_grid(lower, upper, num_points))


# -- array and grid ---------------------------------------------------------

def test_array_defaults_half_wavelength():
    arr = ArrayConfig()
    assert arr.wavelength_m == pytest.approx(3e8 / 2.11e9)
    assert arr.spacing_ratio == pytest.approx(0.5)
    assert arr.vector_length == 31


@pytest.mark.parametrize("kwargs", [{"num_antennas": 1}, {"carrier_frequency_hz": 0.0},
                                    {"wave_speed_m_s": -1.0}, {"antenna_spacing_m": 0.0}])
def test_array_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        ArrayConfig(**kwargs)


def test_default_grid():
    g = build_grid(-np.pi / 2, np.pi / 2, 180)
    assert g.weight == pytest.approx(np.pi / 180, rel=1e-15)
    assert g.angles_rad[0] == pytest.approx(-np.pi / 2 + np.pi / 360, rel=1e-15)
    assert g.angles_rad.size == 180


def test_two_point_grid():
    g = build_grid(0.0, 1.0, 2)
    np.testing.assert_allclose(g.angles_rad, [0.25, 0.75])
    assert g.weight == 0.5


@pytest.mark.parametrize("args", [(0.0, 1.0, 1), (1.0, 0.0, 4), (0.0, 0.0, 4)])
def test_grid_rejects_degenerate(args):
    with pytest.raises(ValueError):
        build_grid(*args)


@given(st.floats(-3.0, 3.0), st.floats(0.01, 3.0), st.integers(2, 400))
def test_grid_invariants(lower, width, d):
    g = build_grid(lower, lower + width, d)
    steps = np.diff(g.angles_rad)
    assert np.all(steps > 0)
    np.testing.assert_allclose(steps, g.weight, rtol=1e-9, atol=1e-12)
    assert g.angles_rad[0] >= g.lower_rad and g.angles_rad[-1] <= g.upper_rad
    assert g.weight > 0


# -- operator -----------------------------------------------------------------

def test_default_operator_shape_and_constant_row(default_operator):
    a = default_operator.matrix_a
    assert a.shape == (31, 180)
    assert default_operator.constant_row_index == 0
    assert np.all(a[0] == default_operator.grid.weight)
    assert a[0, 0] == pytest.approx(np.pi / 180)


def test_zero_phase_column():
    # an even grid symmetric about zero has no theta = 0 point; use an odd one
    op = small_operator(4, 3, -0.3, 0.3)
    assert op.grid.angles_rad[1] == 0.0
    col = op.matrix_a[:, 1]
    np.testing.assert_array_equal(col[:4], op.grid.weight)
    np.testing.assert_array_equal(col[4:], 0.0)


def test_endfire_two_antennas():
    # a midpoint grid never hits pi/2 exactly; take a point just below it
    arr = ArrayConfig(2)
    eps = 1e-3
    g = build_grid(np.pi / 2 - eps, np.pi / 2 + eps, 2)
    theta = g.angles_rad[0]
    a = build_ula_operator(arr, g).matrix_a[:, 0]
    cw = g.weight
    expected = cw * np.array([1.0, np.cos(np.pi * np.sin(theta)), np.sin(np.pi * np.sin(theta))])
    np.testing.assert_allclose(a, expected, atol=1e-15)
    # the limit theta -> pi/2 is [c_w, -c_w, 0]
    np.testing.assert_allclose(a / cw, [1.0, -1.0, 0.0], atol=1e-5)


def test_operator_matches_steering_outer_products(rng):
    op = small_operator(5, 7)
    rho = rng.uniform(0, 1, 7)
    expected = sum(op.grid.weight * rho[i] * np.outer(steering_vector(op.array, t), steering_vector(op.array, t).conj())
                   for i, t in enumerate(op.grid.angles_rad))
    np.testing.assert_allclose(devectorize(apply(op, rho)).to_matrix(), expected, atol=1e-13)


def test_apply_basic(default_operator):
    np.testing.assert_array_equal(apply(default_operator, np.zeros(180)), np.zeros(31))
    e = np.zeros(180)
    e[42] = 1.0
    np.testing.assert_array_equal(apply(default_operator, e), default_operator.matrix_a[:, 42])
    with pytest.raises(ValueError):
        apply(default_operator, np.zeros(179))


def test_mixture_constant_row_is_mass(default_operator, rng):
    rho = sample_aps(ApsModelConfig(), default_operator.grid, rng)
    r = apply(default_operator, rho)
    direct = sum(default_operator.grid.weight * v for v in rho)
    assert r[0] == pytest.approx(direct, rel=1e-12)


@given(st.integers(2, 9), st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_adjoint_constant_row_entry_bound(n, d, seed):
    op = small_operator(n, d)
    a = op.matrix_a
    g = np.random.default_rng(seed)
    rho, x = g.standard_normal(d), g.standard_normal(a.shape[0])
    lhs, rhs = (a @ rho) @ x, rho @ (a.T @ x)
    assert abs(lhs - rhs) <= 1e-12 * (1 + np.abs(a).sum() * np.abs(rho).max() * np.abs(x).max())
    assert (a @ rho)[op.constant_row_index] == pytest.approx(op.grid.weight * rho.sum(), rel=1e-12, abs=1e-14)
    assert np.all(np.isfinite(a))
    assert np.abs(a).max() <= op.grid.weight * (1 + 1e-15)


# -- vectorization and Toeplitz projection ------------------------------------

def test_identity_vectorizes_to_unit():
    r = vectorize(np.eye(4))
    np.testing.assert_array_equal(r, [1, 0, 0, 0, 0, 0, 0])


def test_devectorize_rejects_even_length():
    with pytest.raises(ValueError):
        devectorize(np.zeros(4))


def test_lag_zero_forced_real():
    cov = HermitianToeplitzCovariance([1 + 2j, 3j])
    assert cov.first_row[0] == 1.0
    m = cov.to_matrix()
    np.testing.assert_array_equal(m, m.conj().T)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_vectorize_round_trip(n, seed):
    cov = random_toeplitz(np.random.default_rng(seed), n)
    back = devectorize(vectorize(cov))
    np.testing.assert_array_equal(back.first_row, cov.first_row)
    np.testing.assert_array_equal(vectorize(cov.to_matrix()), vectorize(cov))
    r = vectorize(cov)
    np.testing.assert_array_equal(vectorize(devectorize(r)), r)


@given(st.integers(2, 8), st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_range_of_operator_is_psd(n, d, seed):
    op = small_operator(n, d)
    rho = np.random.default_rng(seed).uniform(0, 1, d)
    mat = devectorize(apply(op, rho)).to_matrix()
    np.testing.assert_allclose(mat, mat.conj().T, atol=0)
    assert np.linalg.eigvalsh(mat).min() >= -1e-12 * max(1.0, rho.sum())


def test_toeplitz_project_examples(rng):
    cov = random_toeplitz(rng, 5)
    np.testing.assert_allclose(toeplitz_project(cov.to_matrix()).first_row, cov.first_row, atol=1e-15)
    np.testing.assert_array_equal(toeplitz_project(np.zeros((3, 3))).first_row, 0)
    proj = toeplitz_project(np.diag([1.0, 3.0])).to_matrix()
    np.testing.assert_allclose(proj, 2 * np.eye(2))


def test_toeplitz_project_least_squares_oracle(rng):
    # Frobenius-nearest Hermitian Toeplitz matrix via a real least-squares fit
    n = 4
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x = x + x.conj().T
    basis = []
    for k in range(2 * n - 1):
        e = np.zeros(2 * n - 1)
        e[k] = 1.0
        basis.append(devectorize(e).to_matrix())
    design = np.stack([np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in basis], axis=1)
    target = np.concatenate([x.real.ravel(), x.imag.ravel()])
    coef = np.linalg.lstsq(design, target, rcond=None)[0]
    np.testing.assert_allclose(vectorize(toeplitz_project(x)), coef, atol=1e-12)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_toeplitz_project_idempotent_self_adjoint(n, seed):
    g = np.random.default_rng(seed)
    x, y = (g.standard_normal((n, n)) + 1j * g.standard_normal((n, n)) for _ in range(2))
    px = toeplitz_project(x).to_matrix()
    np.testing.assert_allclose(toeplitz_project(px).to_matrix(), px, atol=1e-13)
    py = toeplitz_project(y).to_matrix()
    lhs = np.vdot(y, px).real
    rhs = np.vdot(py, x).real
    assert lhs == pytest.approx(rhs, abs=1e-10)


# -- operator cache -----------------------------------------------------------

@pytest.mark.parametrize("name", ["op.bin", "op.csv", "op.npz"])
def test_operator_round_trip(tmp_path, name):
    op = small_operator(3, 11)
    path = save_operator(op, tmp_path / name)
    assert path == tmp_path / name
    back = load_operator(path)
    np.testing.assert_array_equal(back.matrix_a, op.matrix_a)
    assert back.grid == op.grid and back.array == op.array


def test_operator_csv_shape_mismatch(tmp_path):
    op = small_operator(3, 11)
    path = save_operator(op, tmp_path / "op.csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError, match="shape"):
        load_operator(path)
