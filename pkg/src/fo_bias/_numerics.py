"""
Numerical guards and exceptions shared by every module.

This module handles:
- The exception hierarchy raised by the library
- Tolerances for invertibility, symmetry and definiteness tests
- Coercion and validation of matrix arguments
"""

from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg

Matrix = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
ArrayLike = Union[npt.ArrayLike, Matrix]

# Relative smallest-singular-value threshold for invertibility
INV_RTOL = 1e-10
# Relative Frobenius asymmetry accepted in covariance inputs
SYM_RTOL = 1e-8
# Relative residual accepted for computed inverses and identities
RES_RTOL = 1e-8
# Relative half-width of the undecided band in definiteness tests
DEF_RTOL = 1e-9
# Diagonal jitter for Cholesky of PSD-but-singular covariances
CHOL_JITTER = 1e-12
MAX_DIM = 64


class FoBiasError(Exception):
    """
    Base class for all errors raised by fo_bias.

    str() starts with the concrete class name, e.g.
    "SingularMatrixError: K is singular to relative tolerance 1e-10".
    """

    def __str__(self) -> str:
        return f"{type(self).__name__}: {super().__str__()}"


class SingularMatrixError(FoBiasError):
    """Raised when a matrix the analysis must invert is (numerically) singular."""

    pass


class AsymmetricCovarianceError(FoBiasError):
    """Raised when a covariance input is not symmetric to tolerance."""

    pass


class NotPositiveDefiniteError(FoBiasError):
    """Raised when a covariance or weight fails its definiteness requirement."""

    pass


class DimensionError(FoBiasError, ValueError):
    """Raised on shape mismatches or dimensions outside 1..MAX_DIM."""

    pass


class RankDeficientDataError(FoBiasError):
    """Raised when closed-loop data do not excite all input directions."""

    pass


class NoSignChangeError(FoBiasError):
    """Raised when a bracketing search finds no sign change of the margin."""

    pass


class AssumptionViolatedError(FoBiasError):
    """Raised when inputs fall outside the hypotheses of a reduced condition."""

    pass


class NonFiniteError(FoBiasError):
    """Raised when a computation produces NaN or Inf."""

    pass


def as_matrix(value: ArrayLike, name: str, n: Optional[int] = None) -> Matrix:
    """
    Coerce a value to a finite, square float64 matrix.

    Scalars are promoted to 1×1 matrices.

    Args:
        value: Nested sequence, scalar or array
        name: Argument name used in error messages
        n: Required dimension (None to accept any square size)

    Returns:
        A fresh float64 array of shape (n, n)

    Raises:
        DimensionError: If the value is not square, has the wrong size or
            exceeds MAX_DIM
        NonFiniteError: If any entry is NaN or Inf
    """
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {arr.shape}")
    size = arr.shape[0]
    if size < 1 or size > MAX_DIM:
        raise DimensionError(f"{name} has dimension {size}, expected 1..{MAX_DIM}")
    if n is not None and size != n:
        raise DimensionError(f"{name} must be {n}x{n}, got {size}x{size}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


def as_vector(value: ArrayLike, name: str, n: int) -> Matrix:
    """Coerce a value to a finite float64 vector of length n."""
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


def frozen(arr: Matrix) -> Matrix:
    """Mark an array read-only and return it."""
    arr.setflags(write=False)
    return arr


def symmetrize(m: Matrix) -> Matrix:
    """Return the symmetric part (M + Mᵀ)/2."""
    return 0.5 * (m + m.T)


def is_invertible(m: Matrix) -> bool:
    """Relative smallest-singular-value test: σ_min > INV_RTOL · σ_max."""
    s = linalg.svdvals(m)
    return bool(s[0] > 0.0 and s[-1] > INV_RTOL * s[0])


def require_invertible(m: Matrix, name: str) -> None:
    """
    Raise SingularMatrixError unless m passes the invertibility tolerance.

    Args:
        m: Square matrix
        name: Description used in the error message
    """
    if not is_invertible(m):
        raise SingularMatrixError(
            f"{name} is singular to relative tolerance {INV_RTOL:g}"
        )


def solve_right(a: Matrix, b: Matrix) -> Matrix:
    """Return X = B·A⁻¹ by solving Aᵀ Xᵀ = Bᵀ."""
    return np.asarray(linalg.solve(a.T, b.T).T, dtype=np.float64)


def inverse(m: Matrix, name: str) -> Matrix:
    """Invert m after the invertibility guard."""
    require_invertible(m, name)
    return np.asarray(linalg.solve(m, np.eye(m.shape[0])), dtype=np.float64)


def validate_covariance(
    value: ArrayLike, name: str, *, strict: bool, n: Optional[int] = None
) -> Matrix:
    """
    Validate a covariance matrix and return its exactly symmetric version.

    Args:
        value: Candidate covariance
        name: Argument name used in error messages
        strict: Require positive definiteness (otherwise semidefiniteness)
        n: Required dimension

    Returns:
        (Σ + Σᵀ)/2 as a read-only array

    Raises:
        AsymmetricCovarianceError: If ‖Σ − Σᵀ‖_F > SYM_RTOL · ‖Σ‖_F
        NotPositiveDefiniteError: If the definiteness requirement fails
    """
    cov = as_matrix(value, name, n)
    scale = float(np.linalg.norm(cov))
    if np.linalg.norm(cov - cov.T) > SYM_RTOL * max(scale, 1.0):
        raise AsymmetricCovarianceError(f"{name} is not symmetric")
    cov = symmetrize(cov)
    eig = linalg.eigvalsh(cov)
    if strict and eig[0] <= INV_RTOL * max(eig[-1], 0.0):
        raise NotPositiveDefiniteError(f"{name} must be positive definite")
    if not strict and eig[0] < -SYM_RTOL * max(scale, 1.0):
        raise NotPositiveDefiniteError(f"{name} must be positive semidefinite")
    return frozen(cov)


def extreme_eigenvalues(m: Matrix) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetric part of m."""
    eig = linalg.eigvalsh(symmetrize(m))
    return float(eig[0]), float(eig[-1])


def definiteness_tolerance(m: Matrix, reference: Optional[Matrix] = None) -> float:
    """
    Half-width of the Inconclusive band around zero for eigenvalues of m.

    The band scales with the larger of ‖m‖₂ and ‖reference‖₂, so a matrix
    that cancels to zero still has a band of the reference's size.
    """
    scale = float(np.linalg.norm(m, 2))
    if reference is not None:
        scale = max(scale, float(np.linalg.norm(reference, 2)))
    return DEF_RTOL * scale


def relative_frobenius(a: Matrix, b: Matrix) -> float:
    """‖a − b‖_F / max(‖b‖_F, tiny)."""
    denom = max(float(np.linalg.norm(b)), np.finfo(np.float64).tiny)
    return float(np.linalg.norm(a - b)) / denom
