"""
Experiment configuration.

Configs are JSON files validated by pydantic before any computation runs;
unknown keys are rejected at every level.

Example config:
    {
      "system": {"G": [[1, 2], [-3, 4]], "K": [[10, 1], [3, 2]]},
      "noise": {"sigma_r": [[2, 1], [1, 3]], "sigma_w": {"isotropic": 1.0}},
      "estimation": {"T": 5000, "seed": 0},
      "oag": {"u0": [-0.75, 1.5], "step": 0.001},
      "sweep": {"param": "sigma_w2", "grid": [1, 5, 10, 13, 14, 20, 50]},
      "outputs": {"dir": "out"}
    }
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fo_bias._numerics import FoBiasError
from fo_bias.oag import OagConfig, QuadraticCost, SumOfSquaresCost
from fo_bias.system import ClosedLoopSystem, NoiseModel, Process, build_system

logger = logging.getLogger(__name__)

MatrixRows = list[list[float]]


class ConfigError(FoBiasError):
    """Raised when an experiment config cannot be read or validated."""

    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSection(_Section):
    G: MatrixRows
    K: MatrixRows


class IsotropicNoise(_Section):
    isotropic: float = Field(ge=0.0)


class Ar1Process(_Section):
    ar1: float = Field(gt=-1.0, lt=1.0)


class NoiseSection(_Section):
    sigma_r: MatrixRows
    sigma_w: Union[MatrixRows, IsotropicNoise]
    process: Union[Literal["iid"], Ar1Process] = "iid"


class EstimationSection(_Section):
    T: int = Field(default=5000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


class CostSection(_Section):
    """Quadratic cost; Q defaults to 2I and y_ref to 0."""

    Q: Optional[MatrixRows] = None
    y_ref: Optional[list[float]] = None


class OagSection(_Section):
    u0: list[float]
    w: Optional[list[float]] = None
    eps: float = Field(default=1.0, gt=0.0)
    step: float = Field(default=1e-3, gt=0.0)
    max_iters: int = Field(default=1_000_000, ge=1)
    record_stride: int = Field(default=1, ge=1)
    cost: CostSection = Field(default_factory=CostSection)


class SweepSection(_Section):
    param: Literal["sigma_w2"] = "sigma_w2"
    grid: list[float] = Field(min_length=1)
    threshold_range: Optional[tuple[float, float]] = None
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _non_negative_grid(self) -> "SweepSection":
        if any(v < 0 for v in self.grid):
            raise ValueError("sweep grid values must be non-negative")
        return self


class OutputsSection(_Section):
    dir: str = "out"


class ExperimentConfig(_Section):
    system: SystemSection
    noise: NoiseSection
    estimation: EstimationSection = Field(default_factory=EstimationSection)
    oag: Optional[OagSection] = None
    sweep: Optional[SweepSection] = None
    outputs: OutputsSection = Field(default_factory=OutputsSection)

    @model_validator(mode="after")
    def _consistent_dimensions(self) -> "ExperimentConfig":
        n = len(self.system.G)
        matrices = {
            "system.G": self.system.G,
            "system.K": self.system.K,
            "noise.sigma_r": self.noise.sigma_r,
        }
        if not isinstance(self.noise.sigma_w, IsotropicNoise):
            matrices["noise.sigma_w"] = self.noise.sigma_w
        if self.oag is not None and self.oag.cost.Q is not None:
            matrices["oag.cost.Q"] = self.oag.cost.Q
        for name, rows in matrices.items():
            if len(rows) != n or any(len(row) != n for row in rows):
                raise ValueError(f"{name} must be {n}x{n}")
        if self.oag is not None:
            vectors: dict[str, Optional[list[float]]] = {
                "oag.u0": self.oag.u0,
                "oag.w": self.oag.w,
                "oag.cost.y_ref": self.oag.cost.y_ref,
            }
            for name, vec in vectors.items():
                if vec is not None and len(vec) != n:
                    raise ValueError(f"{name} must have length {n}")
        return self

    @property
    def n(self) -> int:
        return len(self.system.G)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment config.

    Raises:
        ConfigError: If the file is unreadable, not JSON or fails the schema
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        cfg = ExperimentConfig.model_validate(payload)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    logger.debug("loaded %dx%d experiment config from %s", cfg.n, cfg.n, path)
    return cfg


def with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    """Return a copy of cfg with estimation.seed replaced (None keeps it)."""
    if seed is None:
        return cfg
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    estimation = cfg.estimation.model_copy(update={"seed": seed})
    return cfg.model_copy(update={"estimation": estimation})


def config_sha256(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, compact separators)."""
    canonical = json.dumps(
        cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def to_noise(cfg: ExperimentConfig, sigma_w2: Optional[float] = None) -> NoiseModel:
    """
    Noise model of the config.

    Args:
        cfg: Experiment config
        sigma_w2: Isotropic disturbance level overriding noise.sigma_w
    """
    section = cfg.noise
    process, rho = Process.IID, 0.0
    if isinstance(section.process, Ar1Process):
        process, rho = Process.AR1, section.process.ar1
    if sigma_w2 is not None:
        return NoiseModel.isotropic(section.sigma_r, sigma_w2, process, rho)
    if isinstance(section.sigma_w, IsotropicNoise):
        return NoiseModel.isotropic(
            section.sigma_r, section.sigma_w.isotropic, process, rho
        )
    return NoiseModel(
        np.array(section.sigma_r, dtype=np.float64),
        np.array(section.sigma_w, dtype=np.float64),
        process,
        rho,
    )


def to_system(
    cfg: ExperimentConfig, sigma_w2: Optional[float] = None
) -> ClosedLoopSystem:
    """Validated closed loop of the config (see to_noise for sigma_w2)."""
    return build_system(cfg.system.G, cfg.system.K, to_noise(cfg, sigma_w2))


def to_cost(cfg: ExperimentConfig) -> QuadraticCost:
    """Quadratic cost of the oag section, defaulting to Q = 2I, y_ref = 0."""
    cost = cfg.oag.cost if cfg.oag is not None else CostSection()
    if cost.Q is None and cost.y_ref is None and cfg.n == 2:
        return SumOfSquaresCost()
    q = 2.0 * np.eye(cfg.n) if cost.Q is None else cost.Q
    return QuadraticCost(q, cost.y_ref)


def to_oag_config(cfg: ExperimentConfig) -> OagConfig:
    """
    Run settings of the oag section.

    Raises:
        ConfigError: If the config has no oag section
    """
    if cfg.oag is None:
        raise ConfigError("config has no oag section")
    section = cfg.oag
    return OagConfig(
        u0=section.u0,
        eps=section.eps,
        step=section.step,
        w=section.w,
        max_iters=section.max_iters,
        record_stride=section.record_stride,
    )
