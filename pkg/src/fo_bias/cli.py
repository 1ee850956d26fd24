"""
CLI wrapper functions and entry points.

Every subcommand reads a JSON experiment config and writes its artifacts
to an output directory. Each artifact carries the config hash: a
'# config_sha256=' line in CSV files, a "config_sha256" key in JSON files.

CLI Commands (installed via pip):
    fo-bias      - Umbrella command with the subcommands below
    fo-analyze   - Conditions (C)/(C′) for the configured loop
    fo-estimate  - Fitted and asymptotic least-squares models
    fo-simulate  - One OAG trajectory with a chosen model
    fo-sweep     - Condition margin and OAG outcome across disturbance levels

Exit codes:
    analyze   0 ConvergentC, 2 DivergentCPrime, 3 Inconclusive
    simulate  0 Converged, 2 Diverged, 3 MaxIters
    all       1 on config or validation errors (message on stderr)
"""

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from fo_bias._numerics import NoSignChangeError
from fo_bias.config import (
    ConfigError,
    ExperimentConfig,
    config_sha256,
    load_config,
    to_cost,
    to_oag_config,
    to_system,
    with_seed,
)
from fo_bias.data import closed_loop_dataset, load_dataset_csv, write_dataset_csv
from fo_bias.estimation import asymptotic_model, fit_ls
from fo_bias.oag import OagStatus, run_oag, write_trajectory
from fo_bias.stability import (
    Verdict,
    check_alignment,
    check_condition_C,
    condition_threshold,
)
from fo_bias.system import loop_summary

logger = logging.getLogger(__name__)

ConfigSource = Union[str, Path, ExperimentConfig]

MODELS = ("fitted", "asymptotic", "true")

_VERDICT_CODES = {
    Verdict.CONVERGENT_C: 0,
    Verdict.DIVERGENT_C_PRIME: 2,
    Verdict.INCONCLUSIVE: 3,
}
_STATUS_CODES = {
    OagStatus.CONVERGED: 0,
    OagStatus.DIVERGED: 2,
    OagStatus.MAX_ITERS: 3,
}

SWEEP_COLUMNS = ["sigma_w2", "lambda_min", "verdict", "oag_status", "final_phi"]


def _resolve(config: ConfigSource, seed: Optional[int]) -> ExperimentConfig:
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    return with_seed(cfg, seed)


def _out_dir(cfg: ExperimentConfig, out: Optional[Union[str, Path]]) -> Path:
    path = Path(cfg.outputs.dir if out is None else out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict[str, Any]) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _describe(exc: BaseException) -> str:
    name = type(exc).__name__
    message = str(exc)
    return message if message.startswith(name) else f"{name}: {message}"


def _failure(exc: BaseException) -> dict[str, Any]:
    logger.debug("command failed", exc_info=True)
    return {"returncode": 1, "outputs": [], "error": _describe(exc)}


def run_analyze(
    config: ConfigSource,
    out: Optional[Union[str, Path]] = None,
    *,
    seed: Optional[int] = None,
) -> dict[str, Any]:
    """
    Evaluate conditions (C) and (C′) and write condition.json.

    Args:
        config: Config path or validated config
        out: Output directory (default outputs.dir)
        seed: Override for estimation.seed

    Returns:
        Dictionary with:
        - returncode (int): 0 ConvergentC, 2 DivergentCPrime, 3 Inconclusive,
          1 on error
        - outputs (list[str]): Written files
        - error (str): Error message, empty on success

    Example:
        >>> result = run_analyze("configs/benchmark_2x2.json", "out")
        >>> print(result["returncode"])
    """
    try:
        cfg = _resolve(config, seed)
        system = to_system(cfg)
        report = check_condition_C(system)
        model = asymptotic_model(system)
        alignment = check_alignment(system.G, model.pi_hat)
        payload = {
            "config_sha256": config_sha256(cfg),
            "condition": report.to_dict(),
            "alignment": alignment._asdict(),
            "asymptotic_model": model.to_dict(),
            "loop": loop_summary(system),
        }
        path = _write_json(_out_dir(cfg, out) / "condition.json", payload)
    except Exception as e:
        return _failure(e)
    logger.info("condition (C) verdict: %s", report.verdict.value)
    return {
        "returncode": _VERDICT_CODES[report.verdict],
        "outputs": [str(path)],
        "error": "",
    }


def run_estimate(
    config: ConfigSource,
    out: Optional[Union[str, Path]] = None,
    *,
    seed: Optional[int] = None,
    data: Optional[Union[str, Path]] = None,
    save_data: bool = False,
) -> dict[str, Any]:
    """
    Fit Π̂_T from closed-loop data and compare it with the asymptotic model.

    Writes estimate.json with both estimates and their Frobenius gap, and
    dataset.csv when save_data is set.

    Args:
        config: Config path or validated config
        out: Output directory (default outputs.dir)
        seed: Override for estimation.seed
        data: Recorded dataset CSV to fit instead of simulating
        save_data: Also write the fitted dataset

    Returns:
        Dictionary with returncode (0 or 1), outputs, error
    """
    try:
        cfg = _resolve(config, seed)
        system = to_system(cfg)
        digest = config_sha256(cfg)
        if data is not None:
            dataset = load_dataset_csv(data)
        else:
            dataset = closed_loop_dataset(
                system,
                cfg.estimation.T,
                cfg.estimation.seed,
                retain_exogenous=save_data,
            )
        fitted = fit_ls(dataset)
        asymptotic = asymptotic_model(system)
        gap = float(np.linalg.norm(fitted.pi_hat - asymptotic.pi_hat))
        directory = _out_dir(cfg, out)
        outputs: list[str] = []
        if save_data:
            comments = {"config_sha256": digest, "seed": str(dataset.seed)}
            path = write_dataset_csv(
                dataset, directory / "dataset.csv", header_comments=comments
            )
            outputs.append(str(path))
        payload = {
            "config_sha256": digest,
            "source": "file" if data is not None else "simulated",
            "seed": None if data is not None else cfg.estimation.seed,
            "fitted": fitted.to_dict(),
            "asymptotic": asymptotic.to_dict(),
            "frobenius_gap": gap,
        }
        outputs.append(str(_write_json(directory / "estimate.json", payload)))
    except Exception as e:
        return _failure(e)
    logger.info("‖Π̂_T - Π̂_∞‖_F = %.4g at T=%d", gap, fitted.T)
    return {"returncode": 0, "outputs": outputs, "error": ""}


def run_simulate(
    config: ConfigSource,
    out: Optional[Union[str, Path]] = None,
    *,
    seed: Optional[int] = None,
    model: str = "fitted",
) -> dict[str, Any]:
    """
    Run OAG on the true plant with the chosen model and write
    trajectory.csv plus its trajectory.json status sidecar.

    Args:
        config: Config path or validated config (needs an oag section)
        out: Output directory (default outputs.dir)
        seed: Override for estimation.seed
        model: "fitted" (LS fit on T samples), "asymptotic" or "true"

    Returns:
        Dictionary with returncode (0 Converged, 2 Diverged, 3 MaxIters,
        1 on error), outputs, error
    """
    try:
        if model not in MODELS:
            raise ConfigError(f"unknown model {model!r}")
        cfg = _resolve(config, seed)
        system = to_system(cfg)
        oag_cfg = to_oag_config(cfg)
        if model == "true":
            pi_hat = system.G
        elif model == "asymptotic":
            pi_hat = asymptotic_model(system).pi_hat
        else:
            dataset = closed_loop_dataset(
                system, cfg.estimation.T, cfg.estimation.seed
            )
            pi_hat = fit_ls(dataset).pi_hat
        traj = run_oag(system.G, pi_hat, to_cost(cfg), oag_cfg)
        comments = {"config_sha256": config_sha256(cfg), "model": model}
        paths = write_trajectory(
            traj, _out_dir(cfg, out), header_comments=comments
        )
    except Exception as e:
        return _failure(e)
    logger.info("OAG with %s model: %s at t=%d", model, traj.status.value, traj.t_exit)
    return {
        "returncode": _STATUS_CODES[traj.status],
        "outputs": [str(p) for p in paths],
        "error": "",
    }


def _sweep_point(cfg: ExperimentConfig, sigma_w2: float) -> dict[str, Any]:
    """Condition margin, fitted model and OAG outcome at one disturbance level."""
    system = to_system(cfg, sigma_w2)
    report = check_condition_C(system)
    dataset = closed_loop_dataset(system, cfg.estimation.T, cfg.estimation.seed)
    pi_hat = fit_ls(dataset).pi_hat
    traj = run_oag(system.G, pi_hat, to_cost(cfg), to_oag_config(cfg))
    logger.debug("sigma_w2=%g: %s / %s", sigma_w2, report.verdict, traj.status)
    return {
        "sigma_w2": float(sigma_w2),
        "lambda_min": report.lambda_min,
        "verdict": report.verdict.value,
        "oag_status": traj.status.value,
        "final_phi": traj.final_phi,
    }


def run_sweep(
    config: ConfigSource,
    out: Optional[Union[str, Path]] = None,
    *,
    seed: Optional[int] = None,
) -> dict[str, Any]:
    """
    Sweep σ_w² over sweep.grid and locate the condition (C) threshold.

    Writes sweep.csv (one row per grid point, in grid order) and
    threshold.json. With sweep.workers > 1 grid points run in a process
    pool. When λ_min(M_C) does not change sign over the threshold range the
    threshold is recorded as null together with the reason.

    Args:
        config: Config path or validated config (needs oag and sweep sections)
        out: Output directory (default outputs.dir)
        seed: Override for estimation.seed

    Returns:
        Dictionary with returncode (0 or 1), outputs, error
    """
    try:
        cfg = _resolve(config, seed)
        if cfg.sweep is None:
            raise ConfigError("config has no sweep section")
        to_oag_config(cfg)
        grid = [float(v) for v in cfg.sweep.grid]
        workers = min(cfg.sweep.workers, len(grid))
        configs = [cfg] * len(grid)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                rows = list(executor.map(_sweep_point, configs, grid))
        else:
            rows = [_sweep_point(c, s2) for c, s2 in zip(configs, grid)]

        digest = config_sha256(cfg)
        directory = _out_dir(cfg, out)
        csv_path = directory / "sweep.csv"
        with csv_path.open("w", newline="", encoding="utf-8") as f:
            f.write(f"# config_sha256={digest}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for row in rows:
                writer.writerow(
                    [
                        repr(row["sigma_w2"]),
                        repr(row["lambda_min"]),
                        row["verdict"],
                        row["oag_status"],
                        repr(row["final_phi"]),
                    ]
                )

        lo, hi = cfg.sweep.threshold_range or (min(grid), max(grid))
        threshold: Optional[float] = None
        reason = ""
        try:
            threshold = condition_threshold(to_system(cfg, lo), (lo, hi))
        except NoSignChangeError as e:
            reason = _describe(e)
        payload = {
            "config_sha256": digest,
            "param": cfg.sweep.param,
            "range": [lo, hi],
            "threshold": threshold,
            "reason": reason,
        }
        json_path = _write_json(directory / "threshold.json", payload)
    except Exception as e:
        return _failure(e)
    return {"returncode": 0, "outputs": [str(csv_path), str(json_path)], "error": ""}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fo-bias",
        description="Closed-loop identification bias and OAG convergence",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="Experiment config (JSON)")
        cmd.add_argument("--out", default=None, help="Output directory")
        cmd.add_argument("--seed", type=int, default=None, help="Seed override")
        cmd.add_argument("-v", "--verbose", action="count", default=0)
        return cmd

    add_command("analyze", "Check conditions (C) and (C′)")
    estimate = add_command("estimate", "Fit the least-squares model")
    estimate.add_argument("--data", default=None, help="Recorded dataset CSV")
    estimate.add_argument(
        "--save-data", action="store_true", help="Also write dataset.csv"
    )
    simulate = add_command("simulate", "Run one OAG trajectory")
    simulate.add_argument("--model", choices=MODELS, default="fitted")
    add_command("sweep", "Sweep the disturbance level")
    return parser


def main(argv: Optional[list[str]] = None) -> None:
    """
    Entry point for the fo-bias command.

    Usage: fo-bias <analyze|estimate|simulate|sweep> --config <path>
           [-v] [--out <dir>] [--seed N] [--model fitted|asymptotic|true]
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    if args.command == "analyze":
        result = run_analyze(args.config, args.out, seed=args.seed)
    elif args.command == "estimate":
        result = run_estimate(
            args.config,
            args.out,
            seed=args.seed,
            data=args.data,
            save_data=args.save_data,
        )
    elif args.command == "simulate":
        result = run_simulate(args.config, args.out, seed=args.seed, model=args.model)
    else:
        result = run_sweep(args.config, args.out, seed=args.seed)

    for path in result["outputs"]:
        sys.stdout.write(f"{path}\n")
    if result["error"]:
        sys.stderr.write(f"Error: {result['error']}\n")
    sys.exit(result["returncode"])


# CLI entry points for pyproject.toml scripts


def analyze_main() -> None:
    """Entry point for fo-analyze."""
    main(["analyze", *sys.argv[1:]])


def estimate_main() -> None:
    """Entry point for fo-estimate."""
    main(["estimate", *sys.argv[1:]])


def simulate_main() -> None:
    """Entry point for fo-simulate."""
    main(["simulate", *sys.argv[1:]])


def sweep_main() -> None:
    """Entry point for fo-sweep."""
    main(["sweep", *sys.argv[1:]])
