"""
Online approximate gradient (OAG) against a static plant.

The iteration is the Euler step of u̇ = -ε Π̂ᵀ∇φ(y):

    u_{t+1} = u_t - τ ε Π̂ᵀ ∇φ(Π u_t + w)

with the true plant Π in the loop and the model Π̂ in the update. With a
tracking cost whose gradient involves ṙ and ẏ the same scheme is a
reference-tracking PI controller (see pi_from_fo).

Example usage:
    from fo_bias import SumOfSquaresCost, OagConfig, run_oag

    traj = run_oag(pi, pi_hat, SumOfSquaresCost(), OagConfig(u0=[-0.75, 1.5]))
    print(traj.status, traj.u_star)
"""

import asyncio
import csv
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, NamedTuple, Optional, Union

import numpy as np
from scipy import linalg

from fo_bias._numerics import (
    ArrayLike,
    AssumptionViolatedError,
    DimensionError,
    IntArray,
    Matrix,
    NotPositiveDefiniteError,
    as_matrix,
    as_vector,
    extreme_eigenvalues,
    frozen,
    require_invertible,
    symmetrize,
)

logger = logging.getLogger(__name__)


class CostKind(str, Enum):
    QUADRATIC = "quadratic"
    SUM_OF_SQUARES = "sum_of_squares"
    TRACKING = "tracking"


class CostFunction(ABC):
    """Static, strictly convex cost φ(y) with its gradient."""

    kind: CostKind

    @property
    @abstractmethod
    def n(self) -> int: ...

    @abstractmethod
    def value(self, y: Matrix) -> float: ...

    @abstractmethod
    def gradient(self, y: Matrix) -> Matrix: ...

    @abstractmethod
    def argmin(self) -> Matrix: ...


class QuadraticCost(CostFunction):
    """
    φ(y) = ½ (y - y_ref)ᵀ Q (y - y_ref) with Q symmetric positive definite.

    Args:
        Q: Weight matrix (symmetrized on construction)
        y_ref: Output setpoint (default 0)
    """

    kind = CostKind.QUADRATIC

    def __init__(self, Q: ArrayLike, y_ref: Optional[ArrayLike] = None) -> None:
        q = symmetrize(as_matrix(Q, "Q"))
        lam_min, lam_max = extreme_eigenvalues(q)
        if lam_min <= 1e-9 * max(lam_max, 0.0):
            raise NotPositiveDefiniteError("Q must be positive definite")
        self.Q = frozen(q)
        n = q.shape[0]
        ref = np.zeros(n) if y_ref is None else as_vector(y_ref, "y_ref", n)
        self.y_ref = frozen(ref)

    @property
    def n(self) -> int:
        return int(self.Q.shape[0])

    def value(self, y: Matrix) -> float:
        e = y - self.y_ref
        return float(0.5 * e @ self.Q @ e)

    def gradient(self, y: Matrix) -> Matrix:
        return np.asarray(self.Q @ (y - self.y_ref))

    def argmin(self) -> Matrix:
        return self.y_ref.copy()


class SumOfSquaresCost(QuadraticCost):
    """φ(y) = y₁² + y₂², i.e. Q = 2I and y_ref = 0 in two dimensions."""

    kind = CostKind.SUM_OF_SQUARES

    def __init__(self) -> None:
        super().__init__(2.0 * np.eye(2))


class TrackingCost:
    """
    Time-varying tracking cost of the PI-controller construction:

        φ_t(y, ẏ) = (c₁/2)‖r_t - y‖² + (c₂/2)‖ṙ_t - ẏ‖²

    Rates are backward differences at the simulation step.

    Args:
        c1: Weight on the tracking error (> 0)
        c2: Weight on the rate error (≥ 0)
        reference: Constant n-vector, or an array with one row per step
        step: Simulation step τ used for the differences
    """

    kind = CostKind.TRACKING

    def __init__(
        self, c1: float, c2: float, reference: ArrayLike, step: float
    ) -> None:
        if c1 <= 0 or c2 < 0:
            raise ValueError(f"need c1 > 0 and c2 >= 0, got c1={c1}, c2={c2}")
        if step <= 0:
            raise ValueError(f"step must be positive, got {step}")
        ref = np.array(reference, dtype=np.float64)
        if ref.ndim == 1:
            ref = ref.reshape(1, -1)
        if ref.ndim != 2 or not np.all(np.isfinite(ref)):
            raise DimensionError("reference must be a finite vector or T×n array")
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.step = float(step)
        self.reference = frozen(ref)

    @property
    def n(self) -> int:
        return int(self.reference.shape[1])

    def reference_at(self, t: int) -> Matrix:
        """r_t; the last row is held beyond the end of the record."""
        return np.asarray(self.reference[min(max(t, 0), len(self.reference) - 1)])

    def reference_rate(self, t: int) -> Matrix:
        """ṙ_t = (r_t - r_{t-1}) / τ with r_{-1} = r_0."""
        return (self.reference_at(t) - self.reference_at(t - 1)) / self.step

    def value(self, y: Matrix, y_rate: Matrix, t: int) -> float:
        e = self.reference_at(t) - y
        e_rate = self.reference_rate(t) - y_rate
        return float(0.5 * self.c1 * e @ e + 0.5 * self.c2 * e_rate @ e_rate)

    def partial_y(self, y: Matrix, t: int) -> Matrix:
        return -self.c1 * (self.reference_at(t) - y)

    def partial_rate(self, y_rate: Matrix, t: int) -> Matrix:
        return -self.c2 * (self.reference_rate(t) - y_rate)

    def direction(self, y: Matrix, y_prev: Matrix, t: int) -> Matrix:
        """Search direction ∂φ/∂y + ∂φ/∂ẏ with ẏ = (y - y_prev)/τ."""
        return self.partial_y(y, t) + self.partial_rate((y - y_prev) / self.step, t)

    def direction_jacobian(self) -> Matrix:
        """d(direction)/dy, constant for this cost."""
        return (self.c1 + self.c2 / self.step) * np.eye(self.n)


@dataclass
class OagConfig:
    """
    Settings of one OAG run.

    Attributes:
        u0: Initial input
        eps: Gain ε
        step: Step size τ
        w: Constant disturbance (default 0)
        max_iters: Iteration cap
        div_bound: Divergence threshold on ‖u‖∞
        record_stride: Record every k-th iterate (the last one is always kept)
        tol_step: Convergence bound on ‖u_{t+1} - u_t‖
        tol_grad_rel: Convergence bound on ‖Πᵀ∇φ‖ relative to 1 + ‖∇φ(y₀)‖
    """

    u0: ArrayLike
    eps: float = 1.0
    step: float = 1e-3
    w: Optional[ArrayLike] = None
    max_iters: int = 1_000_000
    div_bound: float = 1e6
    record_stride: int = 1
    tol_step: float = 1e-10
    tol_grad_rel: float = 1e-8

    def __post_init__(self) -> None:
        if self.eps <= 0 or self.step <= 0:
            raise ValueError("eps and step must be positive")
        if self.max_iters < 1 or self.record_stride < 1:
            raise ValueError("max_iters and record_stride must be at least 1")
        if self.div_bound <= 0:
            raise ValueError("div_bound must be positive")


class OagStatus(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITERS = "max_iters"


@dataclass(eq=False)
class OagTrajectory:
    """
    Recorded OAG run.

    Attributes:
        iterations: Iteration index of each recorded row
        inputs: Recorded iterates u_t
        costs: φ(Π u_t + w) for each recorded row
        status: Converged, Diverged or MaxIters
        t_exit: Iteration at which the run stopped
        nonfinite: Divergence was detected through NaN/Inf
        u_star: Final iterate when converged
        y_star: Π u* + w when converged
    """

    iterations: IntArray = field(repr=False)
    inputs: Matrix = field(repr=False)
    costs: Matrix = field(repr=False)
    status: OagStatus
    t_exit: int
    nonfinite: bool = False
    u_star: Optional[Matrix] = None
    y_star: Optional[Matrix] = None

    @property
    def final_phi(self) -> float:
        return float(self.costs[-1])

    def status_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "t_exit": self.t_exit,
            "nonfinite": self.nonfinite,
            "final_phi": self.final_phi,
            "u_star": None if self.u_star is None else self.u_star.tolist(),
            "y_star": None if self.y_star is None else self.y_star.tolist(),
        }


def run_oag(
    pi_true: ArrayLike,
    pi_hat: ArrayLike,
    cost: CostFunction,
    cfg: OagConfig,
) -> OagTrajectory:
    """
    Iterate u_{t+1} = u_t - τ ε Π̂ᵀ∇φ(Π u_t + w) against the true plant.

    The run stops as Converged once ‖Πᵀ∇φ(y_t)‖ < tol_grad_rel·(1 + ‖∇φ(y₀)‖)
    and ‖u_{t+1} - u_t‖ < tol_step, as Diverged once ‖u_t‖∞ exceeds
    div_bound or an iterate is not finite, and as MaxIters otherwise.

    Args:
        pi_true: Plant sensitivity Π (full rank)
        pi_hat: Model Π̂ used in the update
        cost: Strictly convex static cost
        cfg: Run settings

    Returns:
        OagTrajectory

    Raises:
        SingularMatrixError: If Π is singular
    """
    p = as_matrix(pi_true, "pi_true")
    n = p.shape[0]
    ph = as_matrix(pi_hat, "pi_hat", n)
    if cost.n != n:
        raise DimensionError(f"cost is {cost.n}-dimensional, plant is {n}")
    require_invertible(p, "pi_true")
    u = as_vector(cfg.u0, "u0", n).copy()
    w = np.zeros(n) if cfg.w is None else as_vector(cfg.w, "w", n)
    gain = cfg.step * cfg.eps
    update = gain * ph.T

    y = p @ u + w
    grad = cost.gradient(y)
    tol_grad = cfg.tol_grad_rel * (1.0 + float(np.linalg.norm(grad)))
    iterations, inputs, costs = [0], [u.copy()], [cost.value(y)]
    last_recorded = 0
    status, nonfinite, t = OagStatus.MAX_ITERS, False, 0

    for t in range(1, cfg.max_iters + 1):
        u_next = u - update @ grad
        if not np.all(np.isfinite(u_next)):
            status, nonfinite = OagStatus.DIVERGED, True
            logger.warning("non-finite iterate at t=%d", t)
            break
        step_norm = float(np.linalg.norm(u_next - u))
        u = u_next
        y = p @ u + w
        grad = cost.gradient(y)
        if t % cfg.record_stride == 0:
            iterations.append(t)
            inputs.append(u.copy())
            costs.append(cost.value(y))
            last_recorded = t
        if float(np.abs(u).max()) > cfg.div_bound:
            status = OagStatus.DIVERGED
            break
        if step_norm < cfg.tol_step and float(np.linalg.norm(p.T @ grad)) < tol_grad:
            status = OagStatus.CONVERGED
            break

    if last_recorded != t and not nonfinite:
        iterations.append(t)
        inputs.append(u.copy())
        costs.append(cost.value(y))

    u_star = y_star = None
    if status is OagStatus.CONVERGED:
        u_star, y_star = u.copy(), y.copy()
    logger.debug("OAG stopped at t=%d with status %s", t, status.value)
    return OagTrajectory(
        iterations=np.asarray(iterations, dtype=np.int64),
        inputs=np.asarray(inputs),
        costs=np.asarray(costs),
        status=status,
        t_exit=t,
        nonfinite=nonfinite,
        u_star=u_star,
        y_star=y_star,
    )


async def run_oag_async(
    pi_true: ArrayLike,
    pi_hat: ArrayLike,
    cost: CostFunction,
    cfg: OagConfig,
) -> OagTrajectory:
    """
    Async version of run_oag.

    Runs in the default executor so several trajectories can be awaited
    together.
    """
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(
        None, lambda: run_oag(pi_true, pi_hat, cost, cfg)
    )


def equilibrium_oracle(
    pi_true: ArrayLike, cost: QuadraticCost, w: Optional[ArrayLike] = None
) -> Matrix:
    """
    Equilibrium u* with Π u* + w = argmin_y φ(y) = y_ref.

    Raises:
        SingularMatrixError: If Π is singular
    """
    p = as_matrix(pi_true, "pi_true", cost.n)
    require_invertible(p, "pi_true")
    dist = np.zeros(cost.n) if w is None else as_vector(w, "w", cost.n)
    return np.asarray(linalg.solve(p, cost.argmin() - dist))


def safe_step(
    pi_true: ArrayLike, pi_hat: ArrayLike, Q: ArrayLike, eps: float = 1.0
) -> float:
    """
    Step size τ for which the Euler iteration mirrors the continuous flow.

    τε ≤ 0.5/σ_max(Π̂ᵀQΠ) always; when Π and Π̂ are aligned τε is further
    capped at 0.9·λ_min(ΠΠ̂ᵀ + Π̂Πᵀ)/(‖Q‖₂‖ΠΠ̂ᵀ‖₂²), which makes φ strictly
    decrease along the iterates for quadratic costs.

    Raises:
        AssumptionViolatedError: If Π̂ᵀQΠ = 0 (e.g. Π̂ = 0)
    """
    p = as_matrix(pi_true, "pi_true")
    n = p.shape[0]
    ph = as_matrix(pi_hat, "pi_hat", n)
    q = as_matrix(Q, "Q", n)
    coupling = float(np.linalg.norm(ph.T @ q @ p, 2))
    if coupling == 0.0:
        raise AssumptionViolatedError("Π̂ᵀQΠ = 0, so the update never moves u")
    gain = 0.5 / coupling
    cross = p @ ph.T
    lam_min, _ = extreme_eigenvalues(cross + cross.T)
    if lam_min > 0.0:
        descent = 0.9 * lam_min / (
            float(np.linalg.norm(q, 2)) * float(np.linalg.norm(cross, 2)) ** 2
        )
        gain = min(gain, descent)
    return gain / eps


@dataclass(frozen=True, eq=False)
class PiController:
    """Matrix PI law u̇ = K_I e + K_P ė with e = r - y."""

    k_p: Matrix
    k_i: Matrix


def pi_from_fo(pi_hat: ArrayLike, eps: float, c1: float, c2: float) -> PiController:
    """
    PI gains realized by OAG with the tracking cost:
    K_P = ε c₂ Π̂ᵀ and K_I = ε c₁ Π̂ᵀ.

    c₂ = 0 gives a pure integral controller.
    """
    if eps <= 0 or c1 <= 0 or c2 < 0:
        raise ValueError("need eps > 0, c1 > 0 and c2 >= 0")
    ph = as_matrix(pi_hat, "pi_hat")
    return PiController(k_p=frozen(eps * c2 * ph.T), k_i=frozen(eps * c1 * ph.T))


def run_tracking_oag(
    pi_true: ArrayLike,
    pi_hat: ArrayLike,
    cost: TrackingCost,
    eps: float,
    u0: ArrayLike,
    w: Optional[ArrayLike] = None,
    n_steps: int = 1000,
) -> Matrix:
    """
    OAG with the tracking cost on the static plant y = Πu + w.

    The plant has no dynamics, so y_t = Π u_t + w is available within the
    step: each update solves the algebraic loop
    u_t = u_{t-1} - τ ε Π̂ᵀ d_t(Π u_t + w), where d_t is the tracking
    direction and is affine in y.

    Returns:
        (n_steps + 1)×n array of inputs, starting with u0
    """
    p = as_matrix(pi_true, "pi_true")
    n = p.shape[0]
    ph = as_matrix(pi_hat, "pi_hat", n)
    if cost.n != n:
        raise DimensionError(f"cost is {cost.n}-dimensional, plant is {n}")
    dist = np.zeros(n) if w is None else as_vector(w, "w", n)
    gain = cost.step * eps
    lhs = linalg.lu_factor(np.eye(n) + gain * ph.T @ cost.direction_jacobian() @ p)

    u = as_vector(u0, "u0", n).copy()
    y_prev = p @ u + dist
    inputs = [u.copy()]
    for t in range(1, n_steps + 1):
        rhs = u - gain * ph.T @ cost.direction(dist, y_prev, t)
        u = linalg.lu_solve(lhs, rhs)
        y_prev = p @ u + dist
        inputs.append(u.copy())
    return np.asarray(inputs)


def run_pi_loop(
    pi_true: ArrayLike,
    controller: PiController,
    reference: ArrayLike,
    step: float,
    u0: ArrayLike,
    w: Optional[ArrayLike] = None,
    n_steps: int = 1000,
) -> Matrix:
    """
    Discrete PI law u_t = u_{t-1} + K_I τ e_t + K_P (e_t - e_{t-1}) on the
    static plant, with e_t = r_t - Π u_t - w resolved within the step.

    Returns:
        (n_steps + 1)×n array of inputs, starting with u0
    """
    p = as_matrix(pi_true, "pi_true")
    n = p.shape[0]
    dist = np.zeros(n) if w is None else as_vector(w, "w", n)
    ref = np.array(reference, dtype=np.float64)
    if ref.ndim == 1:
        ref = ref.reshape(1, -1)

    def r_at(t: int) -> Matrix:
        return np.asarray(ref[min(t, len(ref) - 1)])

    combined = controller.k_i * step + controller.k_p
    lhs = linalg.lu_factor(np.eye(n) + combined @ p)
    u = as_vector(u0, "u0", n).copy()
    e_prev = r_at(0) - (p @ u + dist)
    inputs = [u.copy()]
    for t in range(1, n_steps + 1):
        rhs = u + combined @ (r_at(t) - dist) - controller.k_p @ e_prev
        u = linalg.lu_solve(lhs, rhs)
        e_prev = r_at(t) - (p @ u + dist)
        inputs.append(u.copy())
    return np.asarray(inputs)


class PiEquivalence(NamedTuple):
    max_gap: float
    matches: bool
    oag_inputs: Matrix
    pi_inputs: Matrix


def verify_pi_equivalence(
    pi_true: ArrayLike,
    pi_hat: ArrayLike,
    eps: float,
    c1: float,
    c2: float,
    reference: ArrayLike,
    step: float,
    u0: ArrayLike,
    w: Optional[ArrayLike] = None,
    n_steps: int = 1000,
    tol: float = 1e-8,
) -> PiEquivalence:
    """
    Run OAG with the tracking cost and the PI law from pi_from_fo on the same
    plant and compare the input trajectories in max-norm.
    """
    cost = TrackingCost(c1, c2, reference, step)
    oag_inputs = run_tracking_oag(pi_true, pi_hat, cost, eps, u0, w, n_steps)
    controller = pi_from_fo(pi_hat, eps, c1, c2)
    pi_inputs = run_pi_loop(pi_true, controller, reference, step, u0, w, n_steps)
    gap = float(np.abs(oag_inputs - pi_inputs).max())
    return PiEquivalence(gap, gap < tol, oag_inputs, pi_inputs)


def write_trajectory(
    traj: OagTrajectory,
    directory: Union[str, Path],
    *,
    stem: str = "trajectory",
    header_comments: Optional[dict[str, str]] = None,
) -> tuple[Path, Path]:
    """
    Write the trajectory as CSV (iter,u1..un,phi) with a JSON status sidecar.

    Returns:
        (csv_path, json_path)
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    json_path = directory / f"{stem}.json"
    n = traj.inputs.shape[1]
    comments = header_comments or {}

    with csv_path.open("w", newline="", encoding="utf-8") as f:
        for key, value in comments.items():
            f.write(f"# {key}={value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iter", *(f"u{i + 1}" for i in range(n)), "phi"])
        for it, u, phi in zip(traj.iterations, traj.inputs, traj.costs):
            writer.writerow([int(it), *(repr(float(v)) for v in u), repr(float(phi))])

    payload = {**comments, **traj.status_dict()}
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
