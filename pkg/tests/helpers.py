"""
Random closed loops and statistical tolerances shared by the tests.
"""

import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from fo_bias import ClosedLoopSystem, NoiseModel, build_system

BENCH_G = np.array([[1.0, 2.0], [-3.0, 4.0]])
BENCH_K = np.array([[10.0, 1.0], [3.0, 2.0]])
BENCH_SIGMA_R = np.array([[2.0, 1.0], [1.0, 3.0]])
BENCH_U0 = np.array([-0.75, 1.5])

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def benchmark_loop(sigma_w2: float = 1.0) -> ClosedLoopSystem:
    """The 2×2 benchmark loop with Σ_w = σ_w²·I."""
    return build_system(
        BENCH_G, BENCH_K, NoiseModel.isotropic(BENCH_SIGMA_R, sigma_w2)
    )


def benchmark_config(**overrides: Any) -> dict[str, Any]:
    """The 2×2 benchmark config as a dict; top-level sections can be replaced."""
    cfg: dict[str, Any] = json.loads((CONFIG_DIR / "benchmark_2x2.json").read_text())
    cfg.update(overrides)
    return cfg


def write_config(directory: Path, cfg: dict[str, Any], name: str = "cfg.json") -> Path:
    path = directory / name
    path.write_text(json.dumps(cfg))
    return path


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_matrix(
    rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 2.0
) -> np.ndarray:
    """Random n×n matrix with singular values in [lo, hi]."""
    s = rng.uniform(lo, hi, n)
    return random_orthogonal(rng, n) @ np.diag(s) @ random_orthogonal(rng, n)


def random_spd(
    rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 2.0
) -> np.ndarray:
    """Random symmetric positive definite matrix with eigenvalues in [lo, hi]."""
    q = random_orthogonal(rng, n)
    m = q @ np.diag(rng.uniform(lo, hi, n)) @ q.T
    return 0.5 * (m + m.T)


def random_system(
    rng: np.random.Generator,
    n: Optional[int] = None,
    *,
    noise_ratio: Optional[float] = None,
    g_range: tuple[float, float] = (0.5, 2.0),
    K: Optional[np.ndarray] = None,
) -> ClosedLoopSystem:
    """
    Random well-conditioned closed loop.

    Args:
        rng: Generator
        n: Dimension (random in 1..5 when None)
        noise_ratio: Scale of Σ_w relative to Σ_r (random in [0, 4] when None)
        g_range: Singular-value range of G
        K: Controller gain (random when None)
    """
    if n is None:
        n = int(rng.integers(1, 6))
    if noise_ratio is None:
        noise_ratio = float(rng.uniform(0.0, 4.0))
    for _ in range(100):
        g = random_matrix(rng, n, *g_range)
        k = random_matrix(rng, n, 0.5, 5.0) if K is None else K
        if np.linalg.cond(np.eye(n) + g @ k) < 1e3:
            break
    noise = NoiseModel(random_spd(rng, n), noise_ratio * random_spd(rng, n))
    return build_system(g, k, noise)


def cross_covariance_tolerance(
    sigma_a: np.ndarray,
    sigma_b: np.ndarray,
    cross: np.ndarray,
    T: int,
    k: float = 3.0,
) -> float:
    """
    k standard errors of the Frobenius error of a sample cross-covariance.

    For zero-mean jointly Gaussian a, b with C = E[a bᵀ]:
    Var(Ĉ_ij) = (Σa_ii Σb_jj + C_ij²) / T.
    """
    var = (np.outer(np.diag(sigma_a), np.diag(sigma_b)) + cross**2) / T
    return k * float(np.sqrt(var.sum()))


def covariance_tolerance(sigma: np.ndarray, T: int, k: float = 3.0) -> float:
    """k standard errors of the Frobenius error of a Gaussian sample covariance."""
    return cross_covariance_tolerance(sigma, sigma, sigma, T, k)
