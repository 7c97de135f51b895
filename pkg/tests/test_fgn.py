"""Exactness and law checks for the fractional Gaussian noise samplers."""

import math

import mpmath
import numpy as np
import pytest

from perifou import (
    FactorizationFailure,
    FbmPath,
    FgnSpec,
    fbm_from_fgn,
    fgn_autocovariance,
    fgn_covariance,
    generate_fgn_cholesky,
    generate_fgn_circulant,
    generate_two_sided_driver,
    substream_seed,
)


def test_autocovariance_lag0_is_one_for_every_hurst():
    for hurst in (0.51, 0.6, 0.75, 0.9):
        assert fgn_autocovariance(hurst, 0) == 1.0


def test_autocovariance_brownian_increments_independent():
    assert fgn_autocovariance(0.5, 3) == 0.0
    assert fgn_autocovariance(0.5, 1) == 0.0


def test_autocovariance_h075_lag1():
    # 0.5 * (2^1.5 - 2) = sqrt(2) - 1
    assert fgn_autocovariance(0.75, 1) == pytest.approx(0.4142135623730950, abs=1e-12)


@pytest.mark.parametrize("hurst", [0.51, 0.6, 0.74])
@pytest.mark.parametrize("lag", [1, 10, 100])
def test_autocovariance_matches_arbitrary_precision(hurst, lag):
    mpmath.mp.dps = 60
    h2 = 2 * mpmath.mpf(str(hurst))
    n = mpmath.mpf(lag)
    exact = ((n + 1) ** h2 + abs(n - 1) ** h2 - 2 * n**h2) / 2
    ours = fgn_autocovariance(hurst, lag)
    assert abs(ours - float(exact)) <= 1e-10 * abs(float(exact))


def test_autocovariance_rejects_negative_lag():
    with pytest.raises(ValueError):
        fgn_autocovariance(0.7, -1)


def test_circulant_single_increment_uses_first_normal():
    spec = FgnSpec(hurst=0.62, step=0.25, count=1, seed=991)
    draw = generate_fgn_circulant(spec)
    z = np.random.default_rng(991).standard_normal(1)
    np.testing.assert_allclose(draw, 0.25**0.62 * z, rtol=0, atol=0)


def test_circulant_deterministic_bitwise():
    spec = FgnSpec(hurst=0.7, step=1 / 256, count=1000, seed=17)
    first = generate_fgn_circulant(spec)
    second = generate_fgn_circulant(spec)
    assert np.array_equal(first, second)


def test_circulant_law_matches_toeplitz_covariance():
    # empirical covariance of many draws vs the exact Toeplitz target
    hurst, count, reps = 0.7, 512, 10_000
    draws = np.empty((reps, count))
    for r in range(reps):
        spec = FgnSpec(hurst, 1.0, count, substream_seed(2024, 0, r))
        draws[r] = generate_fgn_circulant(spec)
    for lag in range(4):
        products = draws[:, : count - lag] * draws[:, lag:]
        per_draw = products.mean(axis=1)
        se = per_draw.std(ddof=1) / math.sqrt(reps)
        gap = abs(per_draw.mean() - fgn_autocovariance(hurst, lag))
        assert gap <= 5 * se, f"lag {lag}: gap {gap:.4g} > 5 SE {5 * se:.4g}"


def test_cholesky_brownian_factor_is_scaled_identity():
    spec = FgnSpec(hurst=0.5, step=0.5, count=3, seed=5)
    draw = generate_fgn_cholesky(spec)
    z = np.random.default_rng(5).standard_normal(3)
    np.testing.assert_allclose(draw, 0.5**0.5 * z, rtol=0, atol=1e-15)


@pytest.mark.parametrize("hurst", [0.6, 0.7])
def test_cholesky_factor_reproduces_covariance(hurst):
    cov = fgn_covariance(hurst, 64)
    lower = np.linalg.cholesky(cov)
    assert np.max(np.abs(lower @ lower.T - cov)) <= 1e-10


def test_cholesky_count_guard():
    spec = FgnSpec(hurst=0.7, step=1.0, count=10_000, seed=1)
    with pytest.raises(FactorizationFailure):
        generate_fgn_cholesky(spec)


def test_partial_sum_variance_telescopes():
    # 1^T T 1 = Var(B_N) = N^{2H}
    for count in (16, 64, 256):
        cov = fgn_covariance(0.7, count)
        expected = count**1.4
        assert abs(cov.sum() - expected) <= 1e-8 * expected


def test_circulant_and_cholesky_agree_in_law():
    hurst, count, reps = 0.65, 128, 4000
    circ = np.empty((reps, count))
    chol = np.empty((reps, count))
    for r in range(reps):
        circ[r] = generate_fgn_circulant(FgnSpec(hurst, 1.0, count, substream_seed(7, 1, r)))
        chol[r] = generate_fgn_cholesky(FgnSpec(hurst, 1.0, count, substream_seed(7, 2, r)))
    for lag in range(3):
        a = (circ[:, : count - lag] * circ[:, lag:]).mean(axis=1)
        b = (chol[:, : count - lag] * chol[:, lag:]).mean(axis=1)
        se = math.hypot(a.std(ddof=1), b.std(ddof=1)) / math.sqrt(reps)
        assert abs(a.mean() - b.mean()) <= 5 * se


def test_fbm_from_fgn_cumulative_sum():
    path = fbm_from_fgn(np.array([1.0, 1.0, 1.0]), step=1.0)
    np.testing.assert_array_equal(path.values, [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(path.grid, [0.0, 1.0, 2.0, 3.0])


def test_fbm_starts_at_zero_and_sums_exactly():
    increments = np.random.default_rng(3).standard_normal(257)
    path = fbm_from_fgn(increments, step=1 / 16)
    assert path.values[0] == 0.0
    # telescoping: the terminal value is the running sum, bit for bit
    assert path.values[-1] == sum(increments.tolist())


def test_fbm_rejects_empty_increments():
    with pytest.raises(ValueError):
        fbm_from_fgn(np.array([]), step=1.0)


def test_two_sided_driver_rejects_zero_past():
    spec = FgnSpec(hurst=0.7, step=1.0, count=4, seed=0)
    with pytest.raises(ValueError):
        generate_two_sided_driver(spec, past_count=0)


def test_two_sided_driver_anchored_at_time_zero():
    spec = FgnSpec(hurst=0.7, step=0.5, count=6, seed=44)
    path = generate_two_sided_driver(spec, past_count=3)
    at_zero = np.flatnonzero(path.grid == 0.0)
    assert at_zero.size == 1
    assert path.values[at_zero[0]] == 0.0
    assert path.grid[0] == -1.5
    assert path.grid[-1] == 3.0


def test_two_sided_driver_joint_covariance():
    # increments across past and future follow one joint fGn law
    hurst, past, future, reps = 0.7, 8, 8, 4000
    total = past + future
    draws = np.empty((reps, total))
    for r in range(reps):
        spec = FgnSpec(hurst, 1.0, future, substream_seed(99, 3, r))
        path = generate_two_sided_driver(spec, past_count=past)
        draws[r] = np.diff(path.values)
    emp = draws.T @ draws / reps
    cov = fgn_covariance(hurst, total)
    # entrywise Monte Carlo tolerance: Var(x_i x_j) <= 2 for unit-variance pairs
    assert np.max(np.abs(emp - cov)) <= 5 * math.sqrt(2.0 / reps)


def test_circulant_rejects_negative_embedding(monkeypatch):
    # fGn embeddings are nonnegative definite, so force the failure branch
    import perifou.fgn as fgn_module
    from perifou import NonnegativeEmbeddingFailure

    bad = np.array([4.0, 1.0, -1.0, 1.0])
    monkeypatch.setattr(fgn_module, "_embedding_eigenvalues", lambda h, c: bad)
    with pytest.raises(NonnegativeEmbeddingFailure):
        generate_fgn_circulant(FgnSpec(hurst=0.7, step=1.0, count=3, seed=0))


def test_substream_seed_is_deterministic_and_spread():
    a = substream_seed(123, 10, 4)
    assert a == substream_seed(123, 10, 4)
    others = {substream_seed(123, n, r) for n in (10, 20) for r in range(100)}
    assert len(others) == 200
    assert substream_seed(123, 10, 4) != substream_seed(124, 10, 4)


def test_fbm_csv_dump(tmp_path):
    from perifou.fgn import write_fbm_csv

    path = fbm_from_fgn(np.random.default_rng(8).standard_normal(16), step=1 / 4, hurst=0.7)
    target = tmp_path / "fbm.csv"
    write_fbm_csv(path, target)
    lines = target.read_text().strip().splitlines()
    assert lines[0] == "t,value"
    assert len(lines) == path.values.size + 1
    reread = np.array([float(line.split(",")[1]) for line in lines[1:]])
    np.testing.assert_array_equal(reread, path.values)


def test_fbm_path_carries_hurst():
    path = FbmPath(grid=np.array([0.0, 1.0]), values=np.array([0.0, 0.3]), hurst=0.6)
    assert path.hurst == 0.6
