"""
Definiteness tests for convergence of the online approximate gradient.

A model Π̂ is aligned with the plant Π when ΠΠ̂ᵀ + Π̂Πᵀ ≻ 0; the gradient
flow u̇ = -ε Π̂ᵀ∇φ(Πu + w) then converges for every strictly convex,
radially unbounded φ. For the asymptotic least-squares model, alignment
is equivalent to condition (C) on the data-generating loop:

    M_C = GGᵀ - ½(I - Λ)(KS)⁻¹Gᵀ - ½G(KS)⁻ᵀ(I - Λ)ᵀ ≻ 0

and M_C ≺ 0 (condition C′) makes the flow unstable.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, NamedTuple, Optional

import numpy as np
from scipy import optimize

from fo_bias._numerics import (
    SYM_RTOL,
    ArrayLike,
    AssumptionViolatedError,
    DimensionError,
    Matrix,
    NoSignChangeError,
    SingularMatrixError,
    as_matrix,
    definiteness_tolerance,
    extreme_eigenvalues,
    require_invertible,
    symmetrize,
)
from fo_bias.estimation import asymptotic_model, bias_matrix
from fo_bias.system import ClosedLoopSystem, NoiseModel, build_system

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    CONVERGENT_C = "convergent_C"
    DIVERGENT_C_PRIME = "divergent_C_prime"
    INCONCLUSIVE = "inconclusive"


class AlignmentResult(NamedTuple):
    holds: bool
    lambda_min: float


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """
    Outcome of conditions (C) and (C′) for one closed loop.

    Attributes:
        m_align: ΠΠ̂ᵀ + Π̂Πᵀ for the asymptotic model (symmetrized)
        m_c: Condition matrix M_C (symmetrized)
        lambda_min: Smallest eigenvalue of M_C
        lambda_max: Largest eigenvalue of M_C
        verdict: ConvergentC, DivergentCPrime or Inconclusive
        margin: lambda_min, or -lambda_max for DivergentCPrime
        tolerance: Half-width of the Inconclusive band
        lambda_asymmetric: Λ is not symmetric (non-commuting Σ_r, Σ_w)
    """

    m_align: Matrix
    m_c: Matrix
    lambda_min: float
    lambda_max: float
    verdict: Verdict
    margin: float
    tolerance: float
    lambda_asymmetric: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "lambda_asymmetric": self.lambda_asymmetric,
        }


def check_alignment(pi: ArrayLike, pi_hat: ArrayLike) -> AlignmentResult:
    """
    Test ΠΠ̂ᵀ + Π̂Πᵀ ≻ 0.

    Args:
        pi: True sensitivity Π
        pi_hat: Model Π̂

    Returns:
        AlignmentResult(holds, lambda_min)

    Example:
        >>> check_alignment([[2.0]], [[1.0]])
        AlignmentResult(holds=True, lambda_min=4.0)
    """
    p = as_matrix(pi, "pi")
    ph = as_matrix(pi_hat, "pi_hat", p.shape[0])
    m = symmetrize(p @ ph.T + ph @ p.T)
    lam_min, _ = extreme_eigenvalues(m)
    return AlignmentResult(lam_min > definiteness_tolerance(m, p @ p.T), lam_min)


def condition_matrix(system: ClosedLoopSystem) -> Matrix:
    """M_C = GGᵀ - ½BGᵀ - ½GBᵀ with B = (I - Λ)(KS)⁻¹, symmetrized."""
    g = system.G
    b = bias_matrix(system)
    return symmetrize(g @ g.T - 0.5 * b @ g.T - 0.5 * g @ b.T)


def _classify(lam_min: float, lam_max: float, tol: float) -> Verdict:
    if lam_min > tol:
        return Verdict.CONVERGENT_C
    if lam_max < -tol:
        return Verdict.DIVERGENT_C_PRIME
    return Verdict.INCONCLUSIVE


def check_condition_C(system: ClosedLoopSystem) -> ConditionReport:
    """
    Evaluate conditions (C) and (C′) for a data-generating closed loop.

    Returns:
        ConditionReport

    Raises:
        SingularMatrixError: If KS is singular
    """
    m_c = condition_matrix(system)
    lam_min, lam_max = extreme_eigenvalues(m_c)
    tol = definiteness_tolerance(m_c, system.G @ system.G.T)
    verdict = _classify(lam_min, lam_max, tol)
    margin = -lam_max if verdict is Verdict.DIVERGENT_C_PRIME else lam_min

    pi_hat = asymptotic_model(system).pi_hat
    g = system.G
    m_align = symmetrize(g @ pi_hat.T + pi_hat @ g.T)

    lam = system.Lam
    asymmetric = bool(
        np.linalg.norm(lam - lam.T) > SYM_RTOL * max(1.0, float(np.linalg.norm(lam)))
    )
    if asymmetric:
        logger.warning("Λ is not symmetric; M_C uses the transpose-paired reading")
    logger.debug(
        "condition (C): lambda_min=%.6g lambda_max=%.6g -> %s",
        lam_min,
        lam_max,
        verdict.value,
    )
    return ConditionReport(
        m_align=m_align,
        m_c=m_c,
        lambda_min=lam_min,
        lambda_max=lam_max,
        verdict=verdict,
        margin=margin,
        tolerance=tol,
        lambda_asymmetric=asymmetric,
    )


def condition_threshold(
    system: ClosedLoopSystem,
    sigma_w2_range: tuple[float, float],
    *,
    sigma_r: Optional[ArrayLike] = None,
    xtol: float = 1e-3,
) -> float:
    """
    Locate the disturbance level σ_w² where λ_min(M_C) changes sign.

    The loop keeps G, K and the reference covariance; Σ_w = σ_w²·I is swept.
    The root is found by bisection on λ_min.

    Args:
        system: Loop providing G, K (and Σ_r unless given)
        sigma_w2_range: Bracket (low, high) of σ_w² values
        sigma_r: Reference covariance override
        xtol: Absolute tolerance in σ_w²

    Returns:
        The threshold σ_w²

    Raises:
        NoSignChangeError: If λ_min(M_C) has the same sign at both ends
    """
    lo, hi = (float(v) for v in sigma_w2_range)
    if lo > hi:
        lo, hi = hi, lo
    reference = system.noise.sigma_r if sigma_r is None else sigma_r

    def margin(sigma_w2: float) -> float:
        noise = NoiseModel.isotropic(reference, sigma_w2)
        loop = build_system(system.G, system.K, noise)
        return extreme_eigenvalues(condition_matrix(loop))[0]

    f_lo, f_hi = margin(lo), margin(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoSignChangeError(
            f"lambda_min(M_C) is {f_lo:.4g} at {lo:g} "
            f"and {f_hi:.4g} at {hi:g}"
        )
    root = float(optimize.bisect(margin, lo, hi, xtol=xtol))
    logger.info("condition (C) threshold at sigma_w2=%.4f", root)
    return root


def scalar_condition(G: float, K: float, Lam: float) -> bool:
    """
    Scalar form of condition (C): Λ > S with S = 1/(1 + GK).

    The reduction divides by G and by KS, so it needs G > 0 and KS > 0.

    Raises:
        SingularMatrixError: If 1 + GK = 0
        AssumptionViolatedError: If G ≤ 0 or KS ≤ 0
    """
    loop_gain = 1.0 + G * K
    if loop_gain == 0.0 or G == 0.0 or K == 0.0:
        raise SingularMatrixError("G, K or 1 + GK is zero")
    s = 1.0 / loop_gain
    if K * s <= 0.0:
        raise AssumptionViolatedError(f"KS = {K * s:.4g} is not positive")
    if G <= 0.0:
        raise AssumptionViolatedError(f"G = {G:.4g} is not positive")
    return Lam > s


def perfect_tracking_condition(G: ArrayLike, Lam: ArrayLike) -> bool:
    """
    Condition (C) in the perfect-tracking limit K⁻¹ → 0, where (KS)⁻¹ → G:

        ½(I - Λ)GGᵀ + ½GGᵀ(I - Λ)ᵀ ≺ GGᵀ

    Raises:
        SingularMatrixError: If G is singular
    """
    g = as_matrix(G, "G")
    n = g.shape[0]
    lam = as_matrix(Lam, "Lam", n)
    require_invertible(g, "G")
    gg = g @ g.T
    residual = np.eye(n) - lam
    m = symmetrize(gg - 0.5 * residual @ gg - 0.5 * gg @ residual.T)
    lam_min, _ = extreme_eigenvalues(m)
    return lam_min > definiteness_tolerance(m, gg)


def margin_curve(
    system: ClosedLoopSystem, sigma_w2_grid: ArrayLike
) -> list[tuple[float, float]]:
    """(σ_w², λ_min(M_C)) along a grid of isotropic disturbance levels."""
    grid = np.asarray(sigma_w2_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise DimensionError("sigma_w2 grid is empty")
    curve = []
    for s2 in grid:
        loop = build_system(
            system.G, system.K, NoiseModel.isotropic(system.noise.sigma_r, float(s2))
        )
        curve.append((float(s2), extreme_eigenvalues(condition_matrix(loop))[0]))
    return curve
