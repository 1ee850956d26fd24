"""
Closed-loop steady-state datasets.

Each observation is a fresh steady state of the loop driven by the
exogenous pair (r_t, w_t); plant transients are not simulated.
"""

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import signal

from fo_bias._numerics import (
    CHOL_JITTER,
    RES_RTOL,
    DimensionError,
    FoBiasError,
    Matrix,
    NonFiniteError,
    frozen,
)
from fo_bias.system import ClosedLoopSystem, NoiseModel, Process, exogenous_map

logger = logging.getLogger(__name__)

_REFERENCE_STREAM = "reference"
_DISTURBANCE_STREAM = "disturbance"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Closed-loop records D_T = {(u_t, y_t)}.

    Attributes:
        U: T×n inputs
        Y: T×n outputs
        seed: Seed the data were generated from (-1 for loaded data)
        R: T×n reference record, if retained
        W: T×n disturbance record, if retained
    """

    U: Matrix
    Y: Matrix
    seed: int = -1
    R: Optional[Matrix] = None
    W: Optional[Matrix] = None

    def __post_init__(self) -> None:
        if self.U.ndim != 2 or self.U.shape != self.Y.shape:
            raise DimensionError(
                f"U and Y must share a T×n shape, got {self.U.shape}, {self.Y.shape}"
            )
        for name, arr in (("U", self.U), ("Y", self.Y), ("R", self.R), ("W", self.W)):
            if arr is None:
                continue
            if arr.shape != self.U.shape:
                raise DimensionError(
                    f"{name} has shape {arr.shape}, not {self.U.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name} contains non-finite entries")
            # read-only copy, caller arrays untouched
            object.__setattr__(self, name, frozen(np.array(arr, dtype=np.float64)))

    @property
    def T(self) -> int:
        return int(self.U.shape[0])

    @property
    def n(self) -> int:
        return int(self.U.shape[1])

    @property
    def D(self) -> Optional[Matrix]:
        """Merged exogenous record d_t = r_t - w_t."""
        if self.R is None or self.W is None:
            return None
        return self.R - self.W


def _stream_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return (seed ^ int.from_bytes(digest[:8], "little")) & 0xFFFFFFFFFFFFFFFF


def _gaussian_factor(cov: Matrix) -> Matrix:
    """Lower factor L with L Lᵀ = cov, jittered when cov is singular PSD."""
    n = cov.shape[0]
    if not np.any(cov):
        return np.zeros((n, n))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        logger.debug("covariance is singular, adding %.0e jitter", CHOL_JITTER)
        return np.linalg.cholesky(cov + CHOL_JITTER * np.eye(n))


def _stationary_stream(
    cov: Matrix, process: Process, rho: float, T: int, rng: np.random.Generator
) -> Matrix:
    factor = _gaussian_factor(cov)
    z = rng.standard_normal((T, cov.shape[0])) @ factor.T
    if process is Process.IID:
        return z
    # x_1 ~ N(0, Σ); x_{t+1} = ρ x_t + e_t with Cov(e_t) = (1 - ρ²) Σ
    z[1:] *= np.sqrt(1.0 - rho * rho)
    return np.asarray(signal.lfilter([1.0], [1.0, -rho], z, axis=0))


def sample_exogenous(noise: NoiseModel, T: int, seed: int) -> tuple[Matrix, Matrix]:
    """
    Draw mutually independent stationary streams {r_t} and {w_t}.

    Each stream has its own generator seeded with seed XOR a hash of the
    stream name, so either stream is reproducible on its own.

    Args:
        noise: Covariances and process type
        T: Number of samples (≥ 1)
        seed: Non-negative 64-bit seed

    Returns:
        (R, W), each T×n
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    rng_r = np.random.default_rng(_stream_seed(seed, _REFERENCE_STREAM))
    rng_w = np.random.default_rng(_stream_seed(seed, _DISTURBANCE_STREAM))
    r = _stationary_stream(noise.sigma_r, noise.process, noise.rho, T, rng_r)
    w = _stationary_stream(noise.sigma_w, noise.process, noise.rho, T, rng_w)
    return r, w


def closed_loop_dataset(
    system: ClosedLoopSystem,
    T: int,
    seed: int,
    *,
    retain_exogenous: bool = False,
) -> Dataset:
    """
    Generate T closed-loop steady states from the system's noise model.

    Rows satisfy [y; u] = [[S, SGK], [-KS, KS]] [w; r].

    Args:
        system: Validated closed loop (carries its NoiseModel)
        T: Number of observations
        seed: Seed; identical arguments give bit-identical datasets
        retain_exogenous: Keep R and W in the dataset

    Returns:
        Dataset
    """
    r, w = sample_exogenous(system.noise, T, seed)
    n = system.n
    block = exogenous_map(system)
    yu = np.hstack([w, r]) @ block.T
    y, u = yu[:, :n].copy(), yu[:, n:].copy()

    if retain_exogenous:
        # y = G u + w and u = K (r - y), row by row
        scale = max(1.0, float(np.abs(yu).max()), float(np.abs(r).max()))
        plant = float(np.abs(y - u @ system.G.T - w).max())
        control = float(np.abs(u - (r - y) @ system.K.T).max())
        if max(plant, control) > RES_RTOL * scale * np.linalg.cond(block):
            raise FoBiasError(
                f"closed-loop residual {max(plant, control):.3e} exceeds tolerance"
            )

    logger.debug("generated %d closed-loop samples (seed=%d)", T, seed)
    if retain_exogenous:
        return Dataset(U=u, Y=y, seed=seed, R=r, W=w)
    return Dataset(U=u, Y=y, seed=seed)


def write_dataset_csv(
    data: Dataset,
    path: Union[str, Path],
    *,
    header_comments: Optional[dict[str, str]] = None,
) -> Path:
    """
    Write a dataset as CSV with header t,u1..un,y1..yn[,r1..rn,w1..wn].

    Floats are written with repr(), the shortest round-trip decimal form.

    Args:
        data: Dataset to export
        path: Output file
        header_comments: Key/value pairs written as leading '# key=value' lines

    Returns:
        The written path
    """
    path = Path(path)
    n = data.n
    header = ["t", *(f"u{i + 1}" for i in range(n)), *(f"y{i + 1}" for i in range(n))]
    columns = [data.U, data.Y]
    if data.R is not None and data.W is not None:
        header += [f"r{i + 1}" for i in range(n)] + [f"w{i + 1}" for i in range(n)]
        columns += [data.R, data.W]
    table = np.hstack(columns)

    with path.open("w", newline="", encoding="utf-8") as f:
        for key, value in (header_comments or {}).items():
            f.write(f"# {key}={value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for t, row in enumerate(table, start=1):
            writer.writerow([t, *(repr(float(v)) for v in row)])
    return path


def load_dataset_csv(path: Union[str, Path]) -> Dataset:
    """
    Read a dataset written by write_dataset_csv (or any CSV in that layout).

    Lines starting with '#' are skipped. Exogenous columns are loaded when
    both r* and w* columns are present.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise DimensionError(f"{path} contains no data rows")
    table = np.array(rows, dtype=np.float64)

    def columns(prefix: str) -> list[int]:
        return [
            i
            for i, name in enumerate(header)
            if name[:1] == prefix and name[1:].isdigit()
        ]

    u_idx, y_idx = columns("u"), columns("y")
    if not u_idx or len(u_idx) != len(y_idx):
        raise DimensionError(f"{path} must have matching u* and y* columns")
    r_idx, w_idx = columns("r"), columns("w")
    has_exogenous = len(r_idx) == len(u_idx) and len(w_idx) == len(u_idx)
    return Dataset(
        U=table[:, u_idx],
        Y=table[:, y_idx],
        R=table[:, r_idx] if has_exogenous else None,
        W=table[:, w_idx] if has_exogenous else None,
    )
