import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsest.forward_model import (
    ArrayConfig,
    apply,
    build_grid,
    build_ula_operator,
    devectorize,
    steering_vector,
    vectorize,
)
from apsest.synthesis import (
    ApsModelConfig,
    ChannelSimConfig,
    SymbolModel,
    load_dataset,
    mixture_density,
    sample_aps,
    sample_dataset,
    save_dataset,
    simulate_sample_covariance,
    trial_rng,
    true_covariance,
)


def test_model_validation():
    with pytest.raises(ValueError):
        ApsModelConfig(num_paths_choices=(0, 1))
    with pytest.raises(ValueError):
        ApsModelConfig(angle_interval_rad=(1.0, 0.0))
    with pytest.raises(ValueError):
        ApsModelConfig(spread_rad=0.0)
    with pytest.raises(ValueError):
        ChannelSimConfig(num_snapshots=0)
    with pytest.raises(ValueError):
        ChannelSimConfig(noise_variance=-0.1)
    assert ChannelSimConfig(symbol_model="complex-gaussian").symbol_model is SymbolModel.GAUSSIAN


def test_single_bump_peak():
    spread = 0.05
    model = ApsModelConfig(num_paths_choices=(1,), angle_interval_rad=(0.3, 0.3), spread_rad=spread)
    grid = build_grid(0.2, 0.4, 2001)
    aps, params = sample_aps(model, grid, np.random.default_rng(0), return_params=True)
    assert params["weights"].tolist() == [1.0]
    assert params["centres"].tolist() == [0.3]
    peak = 1.0 / np.sqrt(2 * np.pi * spread**2)
    assert aps.max() == pytest.approx(peak, rel=1e-6)
    assert grid.angles_rad[np.argmax(aps)] == pytest.approx(0.3, abs=grid.weight)


@given(st.integers(0, 2**32 - 1))
def test_draws_nonnegative_and_normalized(seed):
    grid = build_grid()
    aps, params = sample_aps(ApsModelConfig(), grid, np.random.default_rng(seed), return_params=True)
    assert np.all(aps >= 0)
    assert params["weights"].sum() == pytest.approx(1.0, rel=1e-12)
    assert len(params["centres"]) in range(1, 6)


def test_total_power_quadrature():
    grid = build_grid()
    model = ApsModelConfig(angle_interval_rad=(0.3, 1.2))
    rng = np.random.default_rng(5)
    for _ in range(20):
        aps, params = sample_aps(model, grid, rng, return_params=True)
        # density integrates to sum(weights) = 1; compare against a fine quadrature too
        fine = np.linspace(-np.pi / 2, np.pi / 2, 200_001)
        exact = np.trapezoid(mixture_density(fine, params["centres"], params["weights"], model.spread_rad), fine)
        assert grid.weight * aps.sum() == pytest.approx(exact, abs=1e-2)
        assert exact == pytest.approx(1.0, abs=1e-2)


def test_dataset_reproducible_and_stream_separated():
    grid = build_grid(num_points=30)
    a = sample_dataset(ApsModelConfig(), grid, 20, 7)
    b = sample_dataset(ApsModelConfig(), grid, 20, 7)
    c = sample_dataset(ApsModelConfig(), grid, 20, 8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    # the dataset stream differs from trial streams of the same seed
    assert not np.array_equal(a[0], sample_aps(ApsModelConfig(), grid, trial_rng(7, 1, 0)))
    with pytest.raises(ValueError):
        sample_dataset(ApsModelConfig(), grid, 0, 7)


def test_dataset_file_round_trip(tmp_path):
    grid = build_grid(num_points=12)
    data = sample_dataset(ApsModelConfig(), grid, 5, 3)
    path, meta_path = save_dataset(data, tmp_path / "ds.csv", grid, ApsModelConfig(), 3)
    back, meta = load_dataset(path)
    np.testing.assert_array_equal(back, data)
    assert meta["seed"] == 3 and meta["num_points"] == 12 and meta_path.exists()


def test_true_covariance_examples():
    op = build_ula_operator(ArrayConfig(6), build_grid(num_points=25))
    np.testing.assert_array_equal(true_covariance(op, np.zeros(25)).to_matrix(), 0)
    i, mass = 9, 2.5
    spike = np.zeros(25)
    spike[i] = mass
    a = steering_vector(op.array, op.grid.angles_rad[i])
    expected = op.grid.weight * mass * np.outer(a, a.conj())
    mat = true_covariance(op, spike).to_matrix()
    np.testing.assert_allclose(mat, expected, atol=1e-14)
    np.testing.assert_allclose(np.diag(mat).real, op.grid.weight * mass)
    assert np.linalg.matrix_rank(mat, tol=1e-10) == 1


def test_trace_identity(default_operator, rng):
    rho = sample_aps(ApsModelConfig(), default_operator.grid, rng)
    tr = np.trace(true_covariance(default_operator, rho).to_matrix()).real
    assert tr == pytest.approx(16 * default_operator.grid.weight * rho.sum(), rel=1e-12)


@pytest.mark.parametrize("symbols", list(SymbolModel))
def test_law_of_large_numbers(default_operator, symbols):
    rng = np.random.default_rng(1)
    rho = sample_aps(ApsModelConfig(), default_operator.grid, rng)
    truth = true_covariance(default_operator, rho).to_matrix()
    est = simulate_sample_covariance(truth, ChannelSimConfig(100_000, 0.0, symbols), rng).to_matrix()
    assert np.linalg.norm(est - truth) / np.linalg.norm(truth) < 5e-2


def test_zero_covariance_without_noise(rng):
    est = simulate_sample_covariance(np.zeros((4, 4)), ChannelSimConfig(50, 0.0), rng)
    np.testing.assert_array_equal(est.to_matrix(), 0)


def test_rejects_non_hermitian(rng):
    with pytest.raises(ValueError):
        simulate_sample_covariance(np.array([[1, 1], [0, 1]]), ChannelSimConfig(), rng)


def test_default_settings_hermitian_toeplitz(default_operator, rng):
    rho = sample_aps(ApsModelConfig(), default_operator.grid, rng)
    est = simulate_sample_covariance(true_covariance(default_operator, rho), ChannelSimConfig(), rng)
    mat = est.to_matrix()
    np.testing.assert_array_equal(mat, mat.conj().T)
    for lag in range(16):
        diag = np.diagonal(mat, lag)
        np.testing.assert_array_equal(diag, diag[0])


def test_simulation_bit_reproducible(default_operator):
    rho = sample_aps(ApsModelConfig(), default_operator.grid, trial_rng(3, 1, 0))
    cov = true_covariance(default_operator, rho)
    a = vectorize(simulate_sample_covariance(cov, ChannelSimConfig(), trial_rng(3, 1, 5)))
    b = vectorize(simulate_sample_covariance(cov, ChannelSimConfig(), trial_rng(3, 1, 5)))
    np.testing.assert_array_equal(a, b)


def test_unbiased_average():
    # mean of M noise-corrected estimates approaches R at rate 1/sqrt(MK)
    op = build_ula_operator(ArrayConfig(4), build_grid(num_points=40))
    rng = np.random.default_rng(11)
    rho = sample_aps(ApsModelConfig(), op.grid, rng)
    truth = apply(op, rho)
    reps, k = 400, 50
    draws = np.stack([vectorize(simulate_sample_covariance(devectorize(truth), ChannelSimConfig(k, 0.1), rng))
                      for _ in range(reps)])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(mean - truth) <= 3.5 * se + 1e-12)

