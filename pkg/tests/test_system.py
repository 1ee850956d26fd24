"""
Tests for the steady-state closed loop and its stationary covariance.
"""

import numpy as np
import pytest

from fo_bias import (
    AsymmetricCovarianceError,
    DimensionError,
    NoiseModel,
    NotPositiveDefiniteError,
    Process,
    SingularMatrixError,
    build_system,
    closed_loop_dataset,
    exogenous_map,
    joint_stationary_cov,
    signal_to_noise_ratio,
)
from fo_bias.system import loop_summary
from tests.helpers import (
    BENCH_G,
    BENCH_K,
    BENCH_SIGMA_R,
    benchmark_loop,
    covariance_tolerance,
    cross_covariance_tolerance,
    random_system,
)


class TestNoiseModel:
    """Tests for NoiseModel validation."""

    def test_isotropic(self) -> None:
        """Test Σ_w = σ_w²·I construction."""
        noise = NoiseModel.isotropic(BENCH_SIGMA_R, 4.0)
        assert np.array_equal(noise.sigma_w, 4.0 * np.eye(2))
        assert noise.process is Process.IID
        assert noise.n == 2

    def test_scalar_promoted(self) -> None:
        """Test scalar covariances become 1×1 matrices."""
        noise = NoiseModel.isotropic(2.0, 1.0)
        assert noise.sigma_r.shape == (1, 1)

    def test_asymmetric_reference_rejected(self) -> None:
        """Test asymmetric Σ_r raises AsymmetricCovarianceError."""
        with pytest.raises(AsymmetricCovarianceError):
            NoiseModel(np.array([[2.0, 1.0], [0.0, 3.0]]), np.zeros((2, 2)))

    def test_semidefinite_reference_rejected(self) -> None:
        """Test Σ_r must be strictly positive definite."""
        with pytest.raises(NotPositiveDefiniteError):
            NoiseModel(np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros((2, 2)))

    def test_indefinite_disturbance_rejected(self) -> None:
        """Test Σ_w must be positive semidefinite."""
        with pytest.raises(NotPositiveDefiniteError):
            NoiseModel(np.eye(2), np.diag([1.0, -1.0]))

    def test_negative_isotropic_level(self) -> None:
        """Test a negative σ_w² raises ValueError."""
        with pytest.raises(ValueError):
            NoiseModel.isotropic(np.eye(2), -1.0)

    def test_ar1_coefficient_range(self) -> None:
        """Test the AR(1) coefficient must lie strictly inside (-1, 1)."""
        with pytest.raises(ValueError):
            NoiseModel(np.eye(2), np.eye(2), Process.AR1, 1.0)
        noise = NoiseModel(np.eye(2), np.eye(2), "ar1", 0.5)
        assert noise.process is Process.AR1

    def test_dimension_mismatch(self) -> None:
        """Test Σ_w must match Σ_r in size."""
        with pytest.raises(DimensionError):
            NoiseModel(np.eye(2), np.eye(3))

    def test_messages_name_the_error(self) -> None:
        """Test every validation message starts with its class name exactly once."""
        cases = [
            (AsymmetricCovarianceError, np.array([[2.0, 1.0], [0.0, 3.0]]), np.eye(2)),
            (NotPositiveDefiniteError, np.ones((2, 2)), np.eye(2)),
            (NotPositiveDefiniteError, np.eye(2), np.diag([1.0, -1.0])),
            (DimensionError, np.eye(2), np.eye(3)),
        ]
        for error, sigma_r, sigma_w in cases:
            with pytest.raises(error) as info:
                NoiseModel(sigma_r, sigma_w)
            message = str(info.value)
            assert message.startswith(f"{error.__name__}: ")
            assert message.count(error.__name__) == 1


class TestSignalToNoiseRatio:
    """Tests for Λ = Σ_r(Σ_r + Σ_w)⁻¹."""

    def test_scalar(self) -> None:
        """Test Σ_r = 2, Σ_w = 1 gives Λ = 2/3."""
        lam = signal_to_noise_ratio(NoiseModel.isotropic(2.0, 1.0))
        assert lam[0, 0] == pytest.approx(2.0 / 3.0)

    def test_noise_free_is_identity(self) -> None:
        """Test Λ is exactly I when Σ_w = 0."""
        lam = signal_to_noise_ratio(NoiseModel.isotropic(BENCH_SIGMA_R, 0.0))
        assert np.array_equal(lam, np.eye(2))

    def test_matches_explicit_inverse(self) -> None:
        """Test the solve agrees with Σ_r(Σ_r + Σ_w)⁻¹."""
        noise = NoiseModel(BENCH_SIGMA_R, np.diag([1.0, 5.0]))
        expected = BENCH_SIGMA_R @ np.linalg.inv(BENCH_SIGMA_R + noise.sigma_w)
        np.testing.assert_allclose(signal_to_noise_ratio(noise), expected, rtol=1e-12)


class TestBuildSystem:
    """Tests for build_system."""

    def test_benchmark(self) -> None:
        """Test the 2×2 benchmark loop is valid and S inverts I + GK."""
        system = benchmark_loop(4.0)
        loop = np.eye(2) + BENCH_G @ BENCH_K
        np.testing.assert_allclose(system.S @ loop, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(system.KS, BENCH_K @ system.S, rtol=1e-12)

    def test_scalar(self) -> None:
        """Test G = K = 1 gives S = KS = 1/2."""
        system = build_system(1.0, 1.0, NoiseModel.isotropic(1.0, 1.0))
        assert system.S[0, 0] == pytest.approx(0.5)
        assert system.KS[0, 0] == pytest.approx(0.5)
        assert system.Lam[0, 0] == pytest.approx(0.5)

    def test_arrays_read_only(self) -> None:
        """Test derived arrays cannot be modified in place."""
        system = benchmark_loop()
        with pytest.raises(ValueError):
            system.S[0, 0] = 1.0

    def test_singular_controller(self) -> None:
        """Test a singular K raises SingularMatrixError."""
        noise = NoiseModel.isotropic(BENCH_SIGMA_R, 1.0)
        with pytest.raises(SingularMatrixError, match="SingularMatrix"):
            build_system(BENCH_G, [[1.0, 2.0], [2.0, 4.0]], noise)

    def test_loop_singular(self) -> None:
        """Test G = -K⁻¹ makes I + GK singular."""
        noise = NoiseModel.isotropic(BENCH_SIGMA_R, 1.0)
        with pytest.raises(SingularMatrixError):
            build_system(-np.linalg.inv(BENCH_K), BENCH_K, noise)

    def test_dimension_mismatch(self) -> None:
        """Test G, K and the noise model must agree in size."""
        noise = NoiseModel.isotropic(np.eye(3), 1.0)
        with pytest.raises(DimensionError):
            build_system(BENCH_G, BENCH_K, noise)
        with pytest.raises(DimensionError):
            build_system(BENCH_G, np.eye(3), NoiseModel.isotropic(np.eye(2), 1.0))

    def test_non_square(self) -> None:
        """Test non-square gains are rejected."""
        with pytest.raises(DimensionError):
            build_system(np.ones((2, 3)), BENCH_K, benchmark_loop().noise)

    def test_loop_summary(self) -> None:
        """Test the JSON summary carries the loop quantities."""
        summary = loop_summary(benchmark_loop(0.0))
        assert summary["n"] == 2
        assert summary["Lambda"] == [[1.0, 0.0], [0.0, 1.0]]
        assert set(summary) == {"n", "S", "KS", "Lambda", "Lambda_eigenvalues"}


class TestExogenousMap:
    """Tests for the [w; r] → [y; u] block map."""

    def test_satisfies_loop_equations(self) -> None:
        """Test y = Gu + w and u = K(r - y) for random inputs."""
        rng = np.random.default_rng(3)
        system = random_system(rng, 3)
        w, r = rng.standard_normal(3), rng.standard_normal(3)
        yu = exogenous_map(system) @ np.concatenate([w, r])
        y, u = yu[:3], yu[3:]
        np.testing.assert_allclose(y, system.G @ u + w, atol=1e-10)
        np.testing.assert_allclose(u, system.K @ (r - y), atol=1e-10)

    def test_input_from_exogenous(self) -> None:
        """Test u depends on (r, w) only through d = r - w."""
        rng = np.random.default_rng(4)
        system = random_system(rng, 2)
        w, r = rng.standard_normal(2), rng.standard_normal(2)
        u = (exogenous_map(system) @ np.concatenate([w, r]))[2:]
        np.testing.assert_allclose(system.loop.input_from_exogenous(r - w), u)


class TestJointStationaryCov:
    """Tests for the stationary covariance of (u, y)."""

    def test_scalar(self) -> None:
        """Test G = K = Σ_r = Σ_w = 1 gives Σ_u = 1/2."""
        system = build_system(1.0, 1.0, NoiseModel.isotropic(1.0, 1.0))
        cov = joint_stationary_cov(system)
        assert cov.sigma_u[0, 0] == pytest.approx(0.5)

    def test_symmetric(self) -> None:
        """Test Σ_u and Σ_y are exactly symmetric."""
        cov = joint_stationary_cov(random_system(np.random.default_rng(5), 4))
        assert np.array_equal(cov.sigma_u, cov.sigma_u.T)
        assert np.array_equal(cov.sigma_y, cov.sigma_y.T)

    def test_input_covariance_positive_definite(self) -> None:
        """Test Σ_u ≻ 0 on 100 random loops with Σ_r ≻ 0."""
        rng = np.random.default_rng(8)
        for _ in range(100):
            cov = joint_stationary_cov(random_system(rng))
            assert np.linalg.eigvalsh(cov.sigma_u)[0] > 0.0

    def test_noise_free_regression_recovers_plant(self) -> None:
        """Test Σ_uy Σ_u⁻¹ = G on random loops when Σ_w = 0."""
        rng = np.random.default_rng(6)
        for _ in range(20):
            system = random_system(rng, noise_ratio=0.0)
            cov = joint_stationary_cov(system)
            regression = cov.sigma_uy @ np.linalg.inv(cov.sigma_u)
            np.testing.assert_allclose(regression, system.G, atol=1e-8)

    @pytest.mark.slow
    def test_matches_sample_covariance(self) -> None:
        """Test Σ_u and Σ_uy on 10⁶ simulated pairs of the benchmark at σ_w² = 4."""
        system = benchmark_loop(4.0)
        data = closed_loop_dataset(system, 1_000_000, seed=11)
        cov = joint_stationary_cov(system)
        sample_u = data.U.T @ data.U / data.T
        sample_uy = data.Y.T @ data.U / data.T
        for sample, exact in ((sample_u, cov.sigma_u), (sample_uy, cov.sigma_uy)):
            error = np.linalg.norm(sample - exact) / np.linalg.norm(exact)
            assert error < 0.02

    @pytest.mark.slow
    def test_sample_covariance_within_standard_errors(self) -> None:
        """Test sample Σ_u and Σ_uy lie within 3 standard errors on three loops."""
        rng = np.random.default_rng(12)
        T = 1_000_000
        for seed in range(3):
            system = random_system(rng, 3)
            data = closed_loop_dataset(system, T, seed=seed)
            cov = joint_stationary_cov(system)
            error_u = np.linalg.norm(data.U.T @ data.U / T - cov.sigma_u)
            assert error_u < covariance_tolerance(cov.sigma_u, T)
            error_uy = np.linalg.norm(data.Y.T @ data.U / T - cov.sigma_uy)
            bound_uy = cross_covariance_tolerance(
                cov.sigma_y, cov.sigma_u, cov.sigma_uy, T
            )
            assert error_uy < bound_uy
