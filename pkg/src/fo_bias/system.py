"""
Steady-state closed loop of a square LTI plant under LTI feedback.

At steady state the plant and controller reduce to their DC gains:

    y = G u + w
    u = K (r - y)

so that [y; u] = [[S, SGK], [-KS, KS]] [w; r] with S = (I + GK)⁻¹.
The plant gain G is the input-output sensitivity Π that feedback
optimization needs.

Example usage:
    from fo_bias import NoiseModel, build_system, joint_stationary_cov

    noise = NoiseModel.isotropic([[2, 1], [1, 3]], sigma_w2=4.0)
    system = build_system([[1, 2], [-3, 4]], [[10, 1], [3, 2]], noise)
    cov = joint_stationary_cov(system)
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import linalg

from fo_bias._numerics import (
    RES_RTOL,
    ArrayLike,
    DimensionError,
    Matrix,
    SingularMatrixError,
    as_matrix,
    frozen,
    inverse,
    require_invertible,
    solve_right,
    symmetrize,
    validate_covariance,
)

logger = logging.getLogger(__name__)


class Process(str, Enum):
    """Temporal structure of the exogenous streams r_t and w_t."""

    IID = "iid"
    AR1 = "ar1"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """
    Stationary Gaussian laws of the reference r and the disturbance w.

    Attributes:
        sigma_r: Reference covariance Σ_r (positive definite)
        sigma_w: Disturbance covariance Σ_w (positive semidefinite)
        process: IID draws or a stationary AR(1) per stream
        rho: AR(1) coefficient in (-1, 1); ignored for IID
    """

    sigma_r: Matrix
    sigma_w: Matrix
    process: Process = Process.IID
    rho: float = 0.0

    def __post_init__(self) -> None:
        sigma_r = validate_covariance(self.sigma_r, "sigma_r", strict=True)
        n = sigma_r.shape[0]
        sigma_w = validate_covariance(self.sigma_w, "sigma_w", strict=False, n=n)
        process = Process(self.process)
        rho = float(self.rho)
        if process is Process.AR1 and not -1.0 < rho < 1.0:
            raise ValueError(f"AR(1) coefficient must lie in (-1, 1), got {rho}")
        if process is Process.IID:
            rho = 0.0
        object.__setattr__(self, "sigma_r", sigma_r)
        object.__setattr__(self, "sigma_w", sigma_w)
        object.__setattr__(self, "process", process)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def isotropic(
        cls,
        sigma_r: ArrayLike,
        sigma_w2: float,
        process: Process = Process.IID,
        rho: float = 0.0,
    ) -> "NoiseModel":
        """Noise model with Σ_w = σ_w² · I."""
        if sigma_w2 < 0:
            raise ValueError(f"sigma_w2 must be non-negative, got {sigma_w2}")
        sr = np.array(sigma_r, dtype=np.float64)
        if sr.ndim == 0:
            sr = sr.reshape(1, 1)
        return cls(sr, sigma_w2 * np.eye(sr.shape[0]), process, rho)

    @property
    def n(self) -> int:
        return int(self.sigma_r.shape[0])


def signal_to_noise_ratio(noise: NoiseModel) -> Matrix:
    """
    Static Wiener gain Λ = Σ_r (Σ_r + Σ_w)⁻¹.

    Solved as (Σ_r + Σ_w)ᵀ Λᵀ = Σ_rᵀ. Λ is exactly I when Σ_w = 0.
    """
    if not np.any(noise.sigma_w):
        return np.eye(noise.n)
    return solve_right(noise.sigma_r + noise.sigma_w, noise.sigma_r)


@dataclass(frozen=True, eq=False)
class LoopDerived:
    """
    Quantities derived from a closed loop.

    Attributes:
        S: Closed-loop sensitivity (I + GK)⁻¹, disturbance to output
        KS: Reference to input map; u = KS·d with d = r - w
        Lam: Signal-to-noise ratio Λ
    """

    S: Matrix
    KS: Matrix
    Lam: Matrix

    def input_from_exogenous(self, d: ArrayLike) -> Matrix:
        """Map d = r - w (vector or rows) to the closed-loop input u = KS·d."""
        return np.asarray(d, dtype=np.float64) @ self.KS.T


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """
    Validated square closed loop with its noise model and derived maps.

    Attributes:
        G: Plant steady-state gain (the sensitivity Π)
        K: Controller steady-state gain
        noise: Exogenous covariances
        loop: S, KS and Λ
    """

    G: Matrix
    K: Matrix
    noise: NoiseModel
    loop: LoopDerived

    @property
    def n(self) -> int:
        return int(self.G.shape[0])

    @property
    def S(self) -> Matrix:
        return self.loop.S

    @property
    def KS(self) -> Matrix:
        return self.loop.KS

    @property
    def Lam(self) -> Matrix:
        return self.loop.Lam


class StationaryCovariance(NamedTuple):
    """Blocks of the stationary covariance of [y; u]."""

    sigma_y: Matrix
    sigma_u: Matrix
    sigma_uy: Matrix


def build_system(G: ArrayLike, K: ArrayLike, noise: NoiseModel) -> ClosedLoopSystem:
    """
    Validate a closed loop and compute S, KS and Λ.

    Closed-loop stability of the underlying dynamics is assumed, not checked:
    it cannot be decided from DC gains alone.

    Args:
        G: n×n plant gain
        K: n×n controller gain
        noise: Noise model of matching dimension

    Returns:
        ClosedLoopSystem with read-only arrays

    Raises:
        DimensionError: On shape mismatch
        SingularMatrixError: If G, K or I + GK is singular (G = -K⁻¹ excluded)
    """
    g = as_matrix(G, "G")
    n = g.shape[0]
    k = as_matrix(K, "K", n)
    if noise.n != n:
        raise DimensionError(f"noise model is {noise.n}-dimensional, system is {n}")

    require_invertible(g, "G")
    require_invertible(k, "K")
    loop_matrix = np.eye(n) + g @ k
    s = inverse(loop_matrix, "I + GK")
    residual = float(np.linalg.norm(loop_matrix @ s - np.eye(n)))
    scale = max(1.0, float(np.linalg.norm(loop_matrix) * np.linalg.norm(s)))
    if residual > RES_RTOL * scale:
        raise SingularMatrixError(f"I + GK inverse residual {residual:.3e} too large")

    loop = LoopDerived(
        S=frozen(s),
        KS=frozen(k @ s),
        Lam=frozen(signal_to_noise_ratio(noise)),
    )
    logger.debug(
        "built %dx%d closed loop, cond(I+GK)=%.3g",
        n,
        n,
        np.linalg.cond(loop_matrix),
    )
    return ClosedLoopSystem(G=frozen(g), K=frozen(k), noise=noise, loop=loop)


def exogenous_map(system: ClosedLoopSystem) -> Matrix:
    """Block matrix [[S, SGK], [-KS, KS]] mapping [w; r] to [y; u]."""
    s, ks = system.S, system.KS
    sgk = s @ system.G @ system.K
    return np.block([[s, sgk], [-ks, ks]])


def joint_stationary_cov(system: ClosedLoopSystem) -> StationaryCovariance:
    """
    Stationary covariance blocks of the closed-loop pair (u, y).

    Σ_u  = KS (Σ_w + Σ_r) (KS)ᵀ
    Σ_uy = -S Σ_w (KS)ᵀ + SGK Σ_r (KS)ᵀ      (= E[y uᵀ])
    Σ_y  = S Σ_w Sᵀ + SGK Σ_r (SGK)ᵀ

    Returns:
        StationaryCovariance(sigma_y, sigma_u, sigma_uy) with Σ_y and Σ_u
        exactly symmetric
    """
    s, ks = system.S, system.KS
    sgk = s @ system.G @ system.K
    sw, sr = system.noise.sigma_w, system.noise.sigma_r
    sigma_u = symmetrize(ks @ (sw + sr) @ ks.T)
    sigma_uy = -s @ sw @ ks.T + sgk @ sr @ ks.T
    sigma_y = symmetrize(s @ sw @ s.T + sgk @ sr @ sgk.T)
    return StationaryCovariance(sigma_y, sigma_u, sigma_uy)


def loop_summary(system: ClosedLoopSystem) -> dict[str, object]:
    """JSON-ready summary of the loop quantities."""
    return {
        "n": system.n,
        "S": system.S.tolist(),
        "KS": system.KS.tolist(),
        "Lambda": system.Lam.tolist(),
        "Lambda_eigenvalues": sorted(
            float(v) for v in linalg.eigvals(system.Lam).real
        ),
    }
