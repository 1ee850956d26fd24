"""
Tests for least-squares fits and their closed-loop limit.
"""

import numpy as np
import pytest

from fo_bias import (
    Dataset,
    EstimateKind,
    NoiseModel,
    RankDeficientDataError,
    SensitivityEstimate,
    asymptotic_model,
    bias_matrix,
    build_system,
    closed_loop_dataset,
    disturbance_estimate,
    fit_ls,
    joint_stationary_cov,
)
from tests.helpers import BENCH_G, BENCH_K, benchmark_loop, random_system


class TestFitLs:
    """Tests for fit_ls."""

    def test_noise_free_recovers_plant(self) -> None:
        """Test Σ_w = 0 data lie on y = Gu, so the fit is G."""
        data = closed_loop_dataset(benchmark_loop(0.0), 200, seed=0)
        estimate = fit_ls(data)
        np.testing.assert_allclose(estimate.pi_hat, BENCH_G, atol=1e-8)
        assert estimate.kind is EstimateKind.FINITE_SAMPLE
        assert estimate.T == 200

    def test_too_few_samples(self) -> None:
        """Test T < n raises RankDeficientDataError."""
        data = closed_loop_dataset(benchmark_loop(), 1, seed=0)
        with pytest.raises(RankDeficientDataError):
            fit_ls(data)

    def test_collinear_inputs(self) -> None:
        """Test inputs confined to a line cannot identify a 2×2 model."""
        u = np.outer(np.arange(1.0, 11.0), [1.0, 2.0])
        with pytest.raises(RankDeficientDataError):
            fit_ls(Dataset(U=u, Y=u.copy()))

    def test_nearly_collinear_inputs(self) -> None:
        """Test UᵀU with σ_min/σ_max far below 1e-10 is rejected."""
        rng = np.random.default_rng(3)
        a = rng.standard_normal(1000)
        u = np.column_stack([a, a + 1e-7 * rng.standard_normal(1000)])
        s = np.linalg.svd(u.T @ u, compute_uv=False)
        assert s[-1] / s[0] < 1e-12
        with pytest.raises(RankDeficientDataError):
            fit_ls(Dataset(U=u, Y=u.copy()))

    def test_variance_does_not_change_fit(self) -> None:
        """Test the likelihood variance σ² leaves Π̂ unchanged."""
        data = closed_loop_dataset(benchmark_loop(4.0), 300, seed=1)
        a = fit_ls(data, sigma2=1.0)
        b = fit_ls(data, sigma2=25.0)
        assert np.array_equal(a.pi_hat, b.pi_hat)
        assert b.sigma2 == 25.0

    def test_export_format(self) -> None:
        """Test the estimate JSON layout."""
        payload = fit_ls(closed_loop_dataset(benchmark_loop(), 50, seed=0)).to_dict()
        assert set(payload) == {"pi_hat", "bias", "kind", "T"}
        assert payload["kind"] == "finite_sample"
        assert payload["bias"] is None

    def test_invalid_variance(self) -> None:
        """Test a non-positive σ² is rejected."""
        with pytest.raises(ValueError):
            SensitivityEstimate(np.eye(2), EstimateKind.FINITE_SAMPLE, T=5, sigma2=0)

    @pytest.mark.slow
    def test_converges_to_asymptotic_model(self) -> None:
        """Test ‖Π̂_T − Π̂_∞‖_F < 0.05 at T = 10⁶, the 2×2 benchmark with σ_w² = 4."""
        system = benchmark_loop(4.0)
        estimate = fit_ls(closed_loop_dataset(system, 1_000_000, seed=0))
        limit = asymptotic_model(system).pi_hat
        assert np.linalg.norm(estimate.pi_hat - limit) < 0.05

    @pytest.mark.slow
    def test_error_shrinks_with_samples(self) -> None:
        """Test the median error over 20 seeds falls with T = 10³, 10⁴, 10⁵."""
        system = benchmark_loop(4.0)
        limit = asymptotic_model(system).pi_hat
        medians = []
        for T in (1_000, 10_000, 100_000):
            fits = [fit_ls(closed_loop_dataset(system, T, seed)) for seed in range(20)]
            errors = [np.linalg.norm(f.pi_hat - limit) for f in fits]
            medians.append(float(np.median(errors)))
        assert medians[0] > medians[1] > medians[2]


class TestAsymptoticModel:
    """Tests for asymptotic_model and bias_matrix."""

    def test_scalar_cancellation(self) -> None:
        """Test G = K = Σ_r = Σ_w = 1 gives Π̂_∞ = 0."""
        system = build_system(1.0, 1.0, NoiseModel.isotropic(1.0, 1.0))
        estimate = asymptotic_model(system)
        assert estimate.pi_hat[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert estimate.bias is not None
        assert estimate.bias[0, 0] == pytest.approx(1.0)

    def test_noise_free_is_unbiased(self) -> None:
        """Test Σ_w = 0 gives Π̂_∞ = G and B = 0."""
        estimate = asymptotic_model(benchmark_loop(0.0))
        np.testing.assert_allclose(estimate.pi_hat, BENCH_G, atol=1e-12)
        assert not np.any(bias_matrix(benchmark_loop(0.0)))

    def test_identifies_inverse_controller(self) -> None:
        """Test a vanishing reference drives Π̂_∞ to -K⁻¹."""
        noise = NoiseModel(1e-6 * np.eye(2), np.eye(2))
        system = build_system(BENCH_G, BENCH_K, noise)
        pi_hat = asymptotic_model(system).pi_hat
        assert np.linalg.norm(pi_hat + np.linalg.inv(BENCH_K)) < 1e-4

    def test_bias_decomposition(self) -> None:
        """Test Π̂_∞ = G - B on random loops."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            system = random_system(rng)
            estimate = asymptotic_model(system)
            np.testing.assert_allclose(
                estimate.pi_hat, system.G - bias_matrix(system), atol=1e-9
            )

    def test_matches_stationary_regression(self) -> None:
        """Test the closed form equals Σ_uy Σ_u⁻¹ on 100 random loops."""
        rng = np.random.default_rng(2)
        for _ in range(100):
            system = random_system(rng)
            cov = joint_stationary_cov(system)
            regression = cov.sigma_uy @ np.linalg.inv(cov.sigma_u)
            pi_hat = asymptotic_model(system).pi_hat
            scale = max(1.0, float(np.linalg.norm(pi_hat))) * np.linalg.cond(
                cov.sigma_u
            )
            assert np.linalg.norm(regression - pi_hat) < 1e-9 * scale

    def test_export_format(self) -> None:
        """Test asymptotic estimates export their bias."""
        payload = asymptotic_model(benchmark_loop()).to_dict()
        assert payload["kind"] == "asymptotic"
        assert payload["T"] is None
        assert np.array(payload["bias"]).shape == (2, 2)


class TestDisturbanceEstimate:
    """Tests for disturbance_estimate."""

    def test_shape(self) -> None:
        """Test vectors and row blocks keep their shape."""
        system = benchmark_loop(2.0)
        assert disturbance_estimate(system, [1.0, 2.0]).shape == (2,)
        assert disturbance_estimate(system, np.ones((7, 2))).shape == (7, 2)

    def test_equals_model_gap(self) -> None:
        """Test ŵ = Π̂_∞u - Gu."""
        system = benchmark_loop(3.0)
        u = np.array([0.3, -1.2])
        expected = asymptotic_model(system).pi_hat @ u - system.G @ u
        estimate = disturbance_estimate(system, u)
        np.testing.assert_allclose(estimate, expected, atol=1e-12)

    @pytest.mark.slow
    def test_matches_regression_of_disturbance(self) -> None:
        """Test -B matches the least-squares regression of W on U."""
        system = benchmark_loop(4.0)
        data = closed_loop_dataset(system, 400_000, seed=3, retain_exogenous=True)
        assert data.W is not None
        coef, *_ = np.linalg.lstsq(data.U, data.W, rcond=None)
        np.testing.assert_allclose(coef.T, -bias_matrix(system), atol=0.05)
