"""Model construction, simulation, and deterministic mean functions."""

import math

import numpy as np
import pytest

from perifou import (
    BasisFunction,
    BasisSet,
    FouModel,
    GridMismatch,
    InvalidStep,
    coupling_gap,
    mean_function,
    path_from_increments,
    simulate_path,
    steady_mean,
    zero_start_mean,
)
from perifou.model import read_sample_path_csv, write_sample_path_csv

SQRT2 = math.sqrt(2.0)


def sine_basis():
    return BasisSet.from_specs([{"kind": "sin", "k": 1}])


def sincos_basis():
    return BasisSet.from_specs([{"kind": "sin", "k": 1}, {"kind": "cos", "k": 1}])


# ---------------------------------------------------------------- basis


def test_basis_function_validation():
    with pytest.raises(ValueError):
        BasisFunction("tanh", 1)
    with pytest.raises(ValueError):
        BasisFunction("sin", 0)
    with pytest.raises(ValueError):
        BasisFunction("const", 2)


def test_basis_duplicates_rejected():
    with pytest.raises(ValueError):
        BasisSet.from_specs([{"kind": "sin", "k": 1}, {"kind": "sin", "k": 1}])


def test_basis_orthonormality_check_catches_unscaled_sine():
    bad = BasisSet.from_callables([lambda t: np.sin(2 * np.pi * np.asarray(t, float))])
    with pytest.raises(ValueError, match="orthonormal"):
        bad.validate()


def test_basis_periodicity_check():
    bad = BasisSet.from_callables([lambda t: np.asarray(t, float)])
    with pytest.raises(ValueError, match="periodic"):
        bad.validate()


def test_standard_basis_validates():
    basis = BasisSet.from_specs(
        [{"kind": "const"}, {"kind": "sin", "k": 1}, {"kind": "cos", "k": 2}]
    )
    basis.validate()
    assert basis.p == 3
    assert basis.bound == pytest.approx(SQRT2)


# ---------------------------------------------------------------- model


def test_model_validation():
    basis = sine_basis()
    with pytest.raises(ValueError):
        FouModel(hurst=0.4, alpha=1.0, mu=(1.0,), sigma=1.0, basis=basis)
    with pytest.raises(ValueError):
        FouModel(hurst=0.7, alpha=0.0, mu=(1.0,), sigma=1.0, basis=basis)
    with pytest.raises(ValueError):
        FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=-0.1, basis=basis)
    with pytest.raises(ValueError):
        FouModel(hurst=0.7, alpha=1.0, mu=(1.0, 2.0), sigma=1.0, basis=basis)


def test_theta_vector_layout():
    model = FouModel(hurst=0.7, alpha=0.9, mu=(1.0, -2.0), sigma=0.3, basis=sincos_basis())
    np.testing.assert_array_equal(model.theta, [1.0, -2.0, 0.9])


# ---------------------------------------------------------------- drift


def test_mean_function_zero_for_zero_amplitudes():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(0.0, 0.0), sigma=1.0, basis=sincos_basis())
    t = np.linspace(0, 3, 50)
    np.testing.assert_array_equal(mean_function(model, t), np.zeros(50))


def test_mean_function_sine_quarter_period():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=1.0, basis=sine_basis())
    assert mean_function(model, 0.25) == pytest.approx(SQRT2, abs=1e-12)


def test_mean_function_periodic():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(0.7, -0.9), sigma=1.0, basis=sincos_basis())
    t = np.linspace(0, 1, 101)
    gap = np.max(np.abs(mean_function(model, t + 1.0) - mean_function(model, t)))
    assert gap <= 1e-12


# ---------------------------------------------------------------- simulation


def test_simulation_tracks_exponential_decay():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(0.0,), sigma=0.0, basis=sine_basis(), xi0=1.0)
    path = simulate_path(model, 5, 1 / 256, seed=1)
    err = np.max(np.abs(path.x - np.exp(-path.grid)))
    assert err <= 2 / 256


def test_simulation_relaxes_to_constant_level():
    basis = BasisSet.from_specs([{"kind": "const"}])
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.0, basis=basis, xi0=0.0)
    path = simulate_path(model, 20, 1 / 128, seed=1)
    assert np.all(np.diff(path.x) >= 0.0)
    assert abs(path.x[-1] - 1.0) <= 1e-6 + 2 / 128


def test_simulation_deterministic():
    model = FouModel(hurst=0.65, alpha=1.2, mu=(0.4, 0.2), sigma=0.7, basis=sincos_basis())
    a = simulate_path(model, 4, 1 / 64, seed=42, stationary_start=True)
    b = simulate_path(model, 4, 1 / 64, seed=42, stationary_start=True)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.driver_increments, b.driver_increments)


def test_simulation_rejects_bad_step():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=1.0, basis=sine_basis())
    with pytest.raises(InvalidStep):
        simulate_path(model, 2, 0.3, seed=0)


def test_initial_value_fixed_vs_burned_in():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis(), xi0=3.0)
    fixed = simulate_path(model, 2, 1 / 64, seed=9)
    assert fixed.x[0] == 3.0
    assert not fixed.stationary_start
    burned = simulate_path(model, 2, 1 / 64, seed=9, stationary_start=True)
    assert burned.stationary_start
    assert abs(burned.x[0] - 3.0) > 0.01  # transient forgotten


def test_euler_error_halves_with_step():
    # deterministic run: global error is O(step)
    model = FouModel(hurst=0.7, alpha=1.3, mu=(0.8,), sigma=0.0, basis=sine_basis(), xi0=0.5)
    errors = []
    for m in (128, 256):
        path = simulate_path(model, 3, 1 / m, seed=0)
        exact = zero_start_mean(model, path.grid) + 0.5 * np.exp(-1.3 * path.grid)
        errors.append(np.max(np.abs(path.x - exact)))
    ratio = errors[1] / errors[0]
    assert abs(ratio - 0.5) <= 0.1


def test_noise_response_is_linear_in_sigma():
    from dataclasses import replace

    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=1.0, basis=sine_basis())
    path1 = simulate_path(model, 5, 1 / 128, seed=77)
    path2 = simulate_path(replace(model, sigma=2.0), 5, 1 / 128, seed=77)
    path0 = simulate_path(replace(model, sigma=0.0), 5, 1 / 128, seed=77)
    gap = np.max(np.abs((path2.x - path1.x) - (path1.x - path0.x)))
    assert gap <= 1e-12


def test_simulation_falls_back_to_cholesky_on_embedding_failure(monkeypatch):
    import perifou.model as model_module
    from perifou.errors import NonnegativeEmbeddingFailure
    from perifou.fgn import generate_fgn_cholesky

    def refuse(spec):
        raise NonnegativeEmbeddingFailure("forced")

    monkeypatch.setattr(model_module, "generate_fgn_circulant", refuse)
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    path = simulate_path(model, 2, 1 / 32, seed=6)
    from perifou.fgn import FgnSpec

    expected = generate_fgn_cholesky(FgnSpec(0.7, 1 / 32, 64, 6))
    np.testing.assert_array_equal(path.driver_increments, expected)


def test_path_from_increments_replays_simulation():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis(), xi0=0.2)
    path = simulate_path(model, 3, 1 / 64, seed=5)
    replay = path_from_increments(model, path.driver_increments, 0.2, 1 / 64)
    np.testing.assert_array_equal(replay.x, path.x)


# ---------------------------------------------------------------- steady mean


def test_steady_mean_zero_for_zero_amplitudes():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(0.0,), sigma=1.0, basis=sine_basis())
    assert steady_mean(model, 0.3) == 0.0


def test_steady_mean_constant_basis():
    basis = BasisSet.from_specs([{"kind": "const"}])
    model = FouModel(hurst=0.7, alpha=0.8, mu=(1.3,), sigma=1.0, basis=basis)
    for t in (0.0, 0.37, 2.5):
        assert steady_mean(model, t) == pytest.approx(1.3 / 0.8, abs=1e-12)


def test_steady_mean_sine_closed_form():
    alpha, mu = 1.1, 0.9
    model = FouModel(hurst=0.7, alpha=alpha, mu=(mu,), sigma=1.0, basis=sine_basis())
    t = np.linspace(0, 2, 41)
    w = 2 * np.pi
    expected = mu * SQRT2 * (alpha * np.sin(w * t) - w * np.cos(w * t)) / (alpha**2 + w**2)
    np.testing.assert_allclose(steady_mean(model, t), expected, atol=1e-12)


def test_steady_mean_solves_the_ode():
    # central difference of h~ equals L - alpha h~ up to O(delta^2)
    model = FouModel(hurst=0.7, alpha=0.9, mu=(1.0, -0.5), sigma=1.0, basis=sincos_basis())
    t = np.linspace(0.01, 0.99, 100)
    delta = 1e-4
    lhs = (steady_mean(model, t + delta) - steady_mean(model, t - delta)) / (2 * delta)
    rhs = mean_function(model, t) - model.alpha * steady_mean(model, t)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_steady_mean_periodic():
    model = FouModel(hurst=0.7, alpha=1.7, mu=(0.3, 0.8), sigma=1.0, basis=sincos_basis())
    t = np.linspace(0, 1, 53)
    assert np.max(np.abs(steady_mean(model, t + 1.0) - steady_mean(model, t))) <= 1e-10


def test_zero_start_mean_at_zero_and_zero_amplitudes():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(0.0,), sigma=1.0, basis=sine_basis())
    assert zero_start_mean(model, 0.0) == 0.0
    assert zero_start_mean(model, 4.7) == 0.0
    model2 = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=1.0, basis=sine_basis())
    assert zero_start_mean(model2, 0.0) == 0.0


def test_zero_start_mean_matches_steady_identity():
    # h(t) = h~(t) - exp(-alpha t) h~(0)
    model = FouModel(hurst=0.7, alpha=1.1, mu=(0.9, 0.4), sigma=1.0, basis=sincos_basis())
    t = np.linspace(0.0, 6.3, 64)
    identity = steady_mean(model, t) - np.exp(-model.alpha * t) * steady_mean(model, 0.0)
    assert np.max(np.abs(zero_start_mean(model, t) - identity)) <= 1e-10


# ---------------------------------------------------------------- coupling


def test_coupling_gap_zero_for_identical_starts():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    path = simulate_path(model, 3, 1 / 64, seed=2)
    twin = path_from_increments(model, path.driver_increments, float(path.x[0]), 1 / 64)
    gap = coupling_gap(model, twin, path)
    assert np.max(gap) == 0.0


def test_coupling_gap_decays_exponentially():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    step = 1 / 128
    path = simulate_path(model, 8, step, seed=3, stationary_start=True)
    shifted = path_from_increments(model, path.driver_increments, float(path.x[0]) + 1.0, step)
    gap = coupling_gap(model, shifted, path)
    bound = np.exp(-model.alpha * path.grid) * (1.0 + 10 * step)
    assert np.all(gap <= bound + 1e-15)
    assert np.all(np.diff(gap) <= 1e-15)


def test_coupling_gap_requires_shared_grid_and_driver():
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    a = simulate_path(model, 2, 1 / 64, seed=1)
    b = simulate_path(model, 2, 1 / 64, seed=2)
    with pytest.raises(GridMismatch):
        coupling_gap(model, a, b)
    c = simulate_path(model, 3, 1 / 64, seed=1)
    with pytest.raises(GridMismatch):
        coupling_gap(model, a, c)


# ---------------------------------------------------------------- files


def test_sample_path_csv_roundtrip_bit_exact(tmp_path):
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    path = simulate_path(model, 2, 1 / 64, seed=11, stationary_start=True)
    target = tmp_path / "path.csv"
    write_sample_path_csv(path, target)
    back = read_sample_path_csv(target, model, stationary_start=True)
    assert np.array_equal(back.grid, path.grid)
    assert np.array_equal(back.x, path.x)
    assert np.array_equal(back.driver_increments, path.driver_increments)
    assert back.stationary_start


def test_sample_path_csv_without_driver(tmp_path):
    model = FouModel(hurst=0.7, alpha=1.0, mu=(1.0,), sigma=0.5, basis=sine_basis())
    path = simulate_path(model, 2, 1 / 64, seed=11)
    stripped = type(path)(
        grid=path.grid, x=path.x, driver_increments=None, model=model
    )
    target = tmp_path / "path.csv"
    write_sample_path_csv(stripped, target)
    assert target.read_text().splitlines()[0] == "t,x"
    back = read_sample_path_csv(target, model)
    assert back.driver_increments is None
    assert np.array_equal(back.x, path.x)
