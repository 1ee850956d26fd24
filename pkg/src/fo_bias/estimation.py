"""
Least-squares sensitivity models from closed-loop data.

The direct fit ŷ = Π̂u ignores the disturbance, so with feedback in the
loop it converges to a blend of the plant gain and the negative inverse
controller:

    Π̂ → Λ G + (I - Λ)(-K⁻¹) = G - (I - Λ)(KS)⁻¹
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np
from scipy import linalg

from fo_bias._numerics import (
    INV_RTOL,
    RES_RTOL,
    ArrayLike,
    Matrix,
    RankDeficientDataError,
    frozen,
    inverse,
    relative_frobenius,
    solve_right,
)
from fo_bias.data import Dataset
from fo_bias.system import ClosedLoopSystem, joint_stationary_cov

logger = logging.getLogger(__name__)


class EstimateKind(str, Enum):
    FINITE_SAMPLE = "finite_sample"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True, eq=False)
class SensitivityEstimate:
    """
    A model Π̂ of the input-output sensitivity.

    Attributes:
        pi_hat: n×n model
        kind: Finite-sample fit or asymptotic limit
        T: Sample count for finite-sample fits
        bias: B = (I - Λ)(KS)⁻¹ for asymptotic estimates
        sigma2: Fixed likelihood variance; does not affect the estimate
    """

    pi_hat: Matrix
    kind: EstimateKind
    T: Optional[int] = None
    bias: Optional[Matrix] = None
    sigma2: float = field(default=1.0)

    def __post_init__(self) -> None:
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.kind is EstimateKind.ASYMPTOTIC and self.bias is None:
            raise ValueError("asymptotic estimates carry their bias matrix")
        if self.kind is EstimateKind.FINITE_SAMPLE and self.T is None:
            raise ValueError("finite-sample estimates carry their sample count")

    def to_dict(self) -> dict[str, Any]:
        return {
            "pi_hat": self.pi_hat.tolist(),
            "bias": None if self.bias is None else self.bias.tolist(),
            "kind": self.kind.value,
            "T": self.T,
        }


def fit_ls(data: Dataset, *, sigma2: float = 1.0) -> SensitivityEstimate:
    """
    Fit Π̂_T = (Yᵀ U)(Uᵀ U)⁻¹ by QR least squares on U.

    This is the maximum-likelihood estimate under q(y | u) = N(Π̂u, σ²) for
    any fixed σ², and carries no intercept.

    Args:
        data: Closed-loop dataset
        sigma2: Likelihood variance, recorded only

    Returns:
        Finite-sample SensitivityEstimate

    Raises:
        RankDeficientDataError: If T < n or U does not excite every direction
    """
    T, n = data.T, data.n
    if T < n:
        raise RankDeficientDataError(f"{T} samples cannot identify a {n}x{n} model")
    q, r = linalg.qr(data.U, mode="economic")
    # σ(UᵀU) = σ(R)²
    s = linalg.svdvals(r)
    if s[0] == 0.0 or s[-1] ** 2 <= INV_RTOL * s[0] ** 2:
        raise RankDeficientDataError("UᵀU is singular (insufficient excitation)")
    # U Π̂ᵀ ≈ Y
    pi_hat_t = linalg.solve_triangular(r, q.T @ data.Y)
    logger.debug("fitted %dx%d model from %d samples", n, n, T)
    return SensitivityEstimate(
        pi_hat=frozen(np.ascontiguousarray(pi_hat_t.T)),
        kind=EstimateKind.FINITE_SAMPLE,
        T=T,
        sigma2=sigma2,
    )


def bias_matrix(system: ClosedLoopSystem) -> Matrix:
    """B = (I - Λ)(KS)⁻¹, the additive closed-loop bias of the direct fit."""
    n = system.n
    return (np.eye(n) - system.Lam) @ inverse(system.KS, "KS")


def asymptotic_model(system: ClosedLoopSystem) -> SensitivityEstimate:
    """
    Almost-sure limit of the direct fit as T → ∞.

    Π̂_∞ = Λ G + (I - Λ)(-K⁻¹), with bias B so that Π̂_∞ = G - B. The result
    is cross-checked against Σ_uy Σ_u⁻¹ from the stationary covariance.

    Raises:
        SingularMatrixError: If K or KS is singular
    """
    n = system.n
    eye = np.eye(n)
    k_inv = inverse(system.K, "K")
    pi_hat = system.Lam @ system.G + (eye - system.Lam) @ (-k_inv)
    bias = bias_matrix(system)

    cov = joint_stationary_cov(system)
    regression = solve_right(cov.sigma_u, cov.sigma_uy)
    mismatch = relative_frobenius(regression, pi_hat)
    if mismatch > RES_RTOL * np.linalg.cond(cov.sigma_u):
        logger.warning(
            "Σ_uy Σ_u⁻¹ differs from the closed form by %.3e (relative)", mismatch
        )

    return SensitivityEstimate(
        pi_hat=frozen(pi_hat),
        kind=EstimateKind.ASYMPTOTIC,
        bias=frozen(bias),
    )


def disturbance_estimate(system: ClosedLoopSystem, u: ArrayLike) -> Matrix:
    """
    Least-squares estimate of the disturbance from closed-loop inputs.

    Since u = KS(r - w), the inputs reveal d = r - w exactly and the Wiener
    filter turns d into E[w | u] = -(I - Λ) d = -B u.

    Args:
        system: Closed loop
        u: A single input vector or a T×n block of inputs

    Returns:
        ŵ with the shape of u
    """
    return -(np.asarray(u, dtype=np.float64) @ bias_matrix(system).T)
