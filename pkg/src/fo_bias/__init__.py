"""
fo-bias: closed-loop identification bias in feedback optimization.

Feedback optimization steers a plant's steady state with the online
approximate gradient (OAG) u̇ = -ε Π̂ᵀ∇φ(y), which needs a model Π̂ of the
steady-state sensitivity. Fitting Π̂ by least squares on data recorded under
feedback gives a biased model; this package quantifies the bias and decides
whether OAG still converges with it.

Example usage:
    from fo_bias import (
        NoiseModel, build_system, closed_loop_dataset, fit_ls,
        asymptotic_model, check_condition_C, run_oag, SumOfSquaresCost,
        OagConfig,
    )

    noise = NoiseModel.isotropic([[2, 1], [1, 3]], sigma_w2=1.0)
    system = build_system([[1, 2], [-3, 4]], [[10, 1], [3, 2]], noise)

    # Fit a model from 5000 closed-loop samples
    estimate = fit_ls(closed_loop_dataset(system, T=5000, seed=0))

    # Is the biased model still good enough for OAG?
    report = check_condition_C(system)
    print(report.verdict, report.lambda_min)

    # Run OAG against the true plant with the fitted model
    traj = run_oag(system.G, estimate.pi_hat, SumOfSquaresCost(),
                   OagConfig(u0=[-0.75, 1.5]))
    print(traj.status, traj.u_star)
"""

__version__ = "0.4.0"

from fo_bias._numerics import (
    AssumptionViolatedError,
    AsymmetricCovarianceError,
    DimensionError,
    FoBiasError,
    NonFiniteError,
    NoSignChangeError,
    NotPositiveDefiniteError,
    RankDeficientDataError,
    SingularMatrixError,
)
from fo_bias.cli import run_analyze, run_estimate, run_simulate, run_sweep
from fo_bias.config import ConfigError, ExperimentConfig, config_sha256, load_config
from fo_bias.data import (
    Dataset,
    closed_loop_dataset,
    load_dataset_csv,
    sample_exogenous,
    write_dataset_csv,
)
from fo_bias.estimation import (
    EstimateKind,
    SensitivityEstimate,
    asymptotic_model,
    bias_matrix,
    disturbance_estimate,
    fit_ls,
)
from fo_bias.oag import (
    CostFunction,
    OagConfig,
    OagStatus,
    OagTrajectory,
    PiController,
    QuadraticCost,
    SumOfSquaresCost,
    TrackingCost,
    equilibrium_oracle,
    pi_from_fo,
    run_oag,
    run_oag_async,
    run_pi_loop,
    run_tracking_oag,
    safe_step,
    verify_pi_equivalence,
    write_trajectory,
)
from fo_bias.stability import (
    ConditionReport,
    Verdict,
    check_alignment,
    check_condition_C,
    condition_matrix,
    condition_threshold,
    margin_curve,
    perfect_tracking_condition,
    scalar_condition,
)
from fo_bias.system import (
    ClosedLoopSystem,
    NoiseModel,
    Process,
    build_system,
    exogenous_map,
    joint_stationary_cov,
    signal_to_noise_ratio,
)

__all__ = [
    # Version
    "__version__",
    # Errors
    "AssumptionViolatedError",
    "AsymmetricCovarianceError",
    "ConfigError",
    "DimensionError",
    "FoBiasError",
    "NoSignChangeError",
    "NonFiniteError",
    "NotPositiveDefiniteError",
    "RankDeficientDataError",
    "SingularMatrixError",
    # Closed loop
    "ClosedLoopSystem",
    "NoiseModel",
    "Process",
    "build_system",
    "exogenous_map",
    "joint_stationary_cov",
    "signal_to_noise_ratio",
    # Data
    "Dataset",
    "closed_loop_dataset",
    "load_dataset_csv",
    "sample_exogenous",
    "write_dataset_csv",
    # Estimation
    "EstimateKind",
    "SensitivityEstimate",
    "asymptotic_model",
    "bias_matrix",
    "disturbance_estimate",
    "fit_ls",
    # Stability
    "ConditionReport",
    "Verdict",
    "check_alignment",
    "check_condition_C",
    "condition_matrix",
    "condition_threshold",
    "margin_curve",
    "perfect_tracking_condition",
    "scalar_condition",
    # OAG
    "CostFunction",
    "OagConfig",
    "OagStatus",
    "OagTrajectory",
    "PiController",
    "QuadraticCost",
    "SumOfSquaresCost",
    "TrackingCost",
    "equilibrium_oracle",
    "pi_from_fo",
    "run_oag",
    "run_oag_async",
    "run_pi_loop",
    "run_tracking_oag",
    "safe_step",
    "verify_pi_equivalence",
    "write_trajectory",
    # Experiments
    "ExperimentConfig",
    "config_sha256",
    "load_config",
    "run_analyze",
    "run_estimate",
    "run_simulate",
    "run_sweep",
]
