"""Command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

from pydantic import ValidationError

from fxtsp import gradflow, highorder
from fxtsp.artifacts import (
    load_system_description,
    summary_path,
    write_json,
    write_sweep_csv,
    write_trajectory_csv,
)
from fxtsp.certify import Benchmark, assemble_certificate
from fxtsp.config import LOG_LEVELS, Settings, format_validation_error, load_run_config
from fxtsp.exceptions import ConfigError, FxtspError, IntegrationError, OracleViolationError
from fxtsp.inequalities import LEMMA_NAMES, run_suite
from fxtsp.logging import get_logger, setup_logging
from fxtsp.models import (
    DEFAULT_EPS,
    CertificateInputs,
    GradFlowParams,
    HighOrderParams,
    SimulationSummary,
    SystemDescription,
)
from fxtsp.simulate import integrate, monitor_lyapunov, monitor_states, sweep

if TYPE_CHECKING:
    from collections.abc import Sequence

    from fxtsp.models import RunConfig

logger = get_logger(__name__)

BUILTIN_SYSTEMS = ("gradflow", "highorder")
COMMANDS = ("certify", "simulate", "sweep", "check-inequalities", "monitor", "reproduce")


def _float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {raw!r}") from e


def _name_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="gradflow, highorder or a path to a JSON system description")
    common.add_argument("--config", type=Path, help="JSON run configuration; flags override its values")
    common.add_argument("--eps", type=float, help="time-scale parameter")
    common.add_argument("--theta", type=float, help="weight of V in the composite function")
    common.add_argument("--mu", type=float, help="interconnection slack")
    common.add_argument("--q", type=float, help="constant of the cross-term splitting")
    common.add_argument("--seed", type=int, help="root seed for sampling and sweep directions")
    common.add_argument("--samples", type=int, help="samples per oracle")
    common.add_argument("--shards", type=int, help="independent substreams per oracle")
    common.add_argument("--lemmas", type=_name_list, help=f"oracle subset from {', '.join(LEMMA_NAMES)}")
    common.add_argument("--out", type=Path, help="output path; JSON goes to stdout when omitted")
    common.add_argument("--magnitudes", type=_float_list, help="ascending initial-condition magnitudes")
    common.add_argument("--directions", type=int, help="seeded unit directions per magnitude")
    common.add_argument("--fast-only", action="store_const", const=True, help="sweep the fast state only")
    common.add_argument("--rate-mode", action="store_const", const=True, help="check the decrease rate as well")
    common.add_argument("--x0", type=_float_list, help="initial slow state")
    common.add_argument("--z0", type=_float_list, help="initial fast state")
    common.add_argument("--method", choices=("RK45", "DOP853"), help="explicit Runge-Kutta stepper")
    common.add_argument("--rel-tol", type=float, help="relative tolerance")
    common.add_argument("--abs-tol", type=float, help="absolute tolerance")
    common.add_argument("--t-max", type=float, help="integration horizon")
    common.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, help="logging threshold")

    parser = argparse.ArgumentParser(
        prog="fxtsp",
        description="Fixed-time stability certificates and simulation for singularly perturbed systems",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    keys = (
        "system",
        "eps",
        "theta",
        "mu",
        "q",
        "seed",
        "samples",
        "shards",
        "lemmas",
        "out",
        "magnitudes",
        "directions",
        "fast_only",
        "rate_mode",
        "x0",
        "z0",
    )
    overrides: dict[str, Any] = {key: getattr(args, key) for key in keys}
    integrator = {
        "method": args.method,
        "rel_tol": args.rel_tol,
        "abs_tol": args.abs_tol,
        "t_max": args.t_max,
    }
    overrides["integrator"] = {key: value for key, value in integrator.items() if value is not None}
    return overrides


def _describe(config: RunConfig) -> SystemDescription:
    if config.system in BUILTIN_SYSTEMS:
        return SystemDescription.model_validate({"kind": config.system, "mu": config.mu, "q": config.q})
    description = load_system_description(Path(config.system))
    updates = {key: value for key, value in (("mu", config.mu), ("q", config.q)) if value is not None}
    return description.model_copy(update=updates) if updates else description


def resolve_benchmark(description: SystemDescription) -> Benchmark:
    """Build the benchmark a description names.

    Raises:
        ConfigError: If the description carries constants only, or its params are invalid.
    """
    if description.kind is None:
        raise ConfigError("a constants-only system description supports 'certify' alone")
    try:
        if description.kind == "gradflow":
            params = GradFlowParams.model_validate(description.params) if description.params else None
            mu = description.mu if description.mu is not None else gradflow.REFERENCE_MU
            return gradflow.build_benchmark(params, mu=mu, q=description.q)
        fields = {**description.params}
        for key, value in (("mu", description.mu), ("q", description.q)):
            if value is not None:
                fields[key] = value
        return highorder.build_benchmark(HighOrderParams.model_validate(fields))
    except ValidationError as e:
        raise ConfigError(f"invalid {description.kind} parameters: {format_validation_error(e)}") from e


def _certificate_inputs(description: SystemDescription) -> CertificateInputs:
    if description.certificate is not None:
        return description.certificate
    return resolve_benchmark(description).inputs()


def _output_path(config: RunConfig) -> Path:
    if config.out is None:
        raise ConfigError(f"'{config.command}' requires an output path")
    return config.out


def _initial_state(config: RunConfig, description: SystemDescription) -> tuple[list[float], list[float]]:
    if config.x0 is not None and config.z0 is not None:
        return config.x0, config.z0
    if description.kind == "highorder":
        return list(highorder.REFERENCE_X0), list(highorder.REFERENCE_Z0)
    return list(gradflow.REFERENCE_X0), list(gradflow.REFERENCE_Z0)


def _run_certify(config: RunConfig, description: SystemDescription) -> int:
    inputs = _certificate_inputs(description)
    certificate = assemble_certificate(inputs, theta=config.theta, eps=config.eps)
    write_json(certificate.to_record(inputs), config.out)
    return 0


def _run_simulate(config: RunConfig, description: SystemDescription) -> int:
    bench = resolve_benchmark(description)
    eps = config.eps if config.eps is not None else DEFAULT_EPS
    certificate = bench.certify(theta=config.theta)
    x0, z0 = _initial_state(config, description)
    traj = integrate(
        bench.model,
        eps,
        x0,
        z0,
        config.integrator,
        certificates=(bench.reduced, bench.boundary),
        theta=certificate.theta,
    )
    out = _output_path(config)
    write_trajectory_csv(traj, out)
    summary = SimulationSummary(
        system=bench.model.name,
        eps=eps,
        x0=x0,
        z0=z0,
        samples=len(traj),
        t_final=float(traj.times[-1]),
        final_norm=traj.final_norm,
        settle_time=traj.settle_time,
        nfev=traj.nfev,
        step_rejections=traj.step_rejections,
        method=config.integrator.method,
        certificate=certificate.to_record(bench.inputs()),
    )
    write_json(summary, summary_path(out))
    return 0


def _run_sweep(config: RunConfig, description: SystemDescription, settings: Settings) -> int:
    bench = resolve_benchmark(description)
    eps = config.eps if config.eps is not None else DEFAULT_EPS
    table = sweep(
        bench.model,
        eps,
        config.magnitudes,
        config.directions,
        config.integrator,
        seed=config.seed,
        workers=settings.threads,
        fast_only=config.fast_only,
    )
    write_sweep_csv(table, _output_path(config))
    return 0


def _run_check_inequalities(config: RunConfig, settings: Settings) -> int:
    report = run_suite(config.samples, config.seed, config.lemmas, config.shards, workers=settings.threads)
    write_json(report, config.out)
    if report.violations:
        failing = sorted(name for name, lemma in report.lemmas.items() if lemma.violations)
        raise OracleViolationError(f"{report.violations} violations in {', '.join(failing)}")
    return 0


def _run_monitor(config: RunConfig, description: SystemDescription) -> int:
    bench = resolve_benchmark(description)
    rc, bc = bench.reduced, bench.boundary
    if config.rate_mode:
        certificate = bench.certify(theta=config.theta, eps=config.eps)
        report = monitor_states(bench.model, rc, bc, certificate, certificate.eps, config.samples, config.seed)
    else:
        eps = config.eps if config.eps is not None else DEFAULT_EPS
        certificate = bench.certify(theta=config.theta)
        x0, z0 = _initial_state(config, description)
        traj = integrate(bench.model, eps, x0, z0, config.integrator, certificates=(rc, bc), theta=certificate.theta)
        report = monitor_lyapunov(
            bench.model,
            rc,
            bc,
            certificate.theta,
            certificate.gamma1,
            certificate.gamma2,
            certificate.lambda_min,
            traj,
            eps,
            rel_tol=config.integrator.rel_tol,
            abs_tol=config.integrator.abs_tol,
        )
    write_json(report, config.out)
    if report.violations:
        raise OracleViolationError(
            f"{report.violations} of {report.checked} checked samples violate the {report.mode} check"
        )
    return 0


def _run_reproduce(config: RunConfig, description: SystemDescription) -> int:
    if description.kind == "gradflow":
        report = gradflow.reproduce(samples=config.samples, seed=config.seed)
    elif description.kind == "highorder":
        report = highorder.reproduce(config.integrator, samples=config.samples, seed=config.seed)
    else:
        raise ConfigError("'reproduce' needs --system gradflow or highorder")
    write_json(report, config.out)
    return 0


def run(config: RunConfig, settings: Settings | None = None) -> int:
    """Execute one command and return 0; artifacts are written before any oracle verdict is raised.

    Raises:
        OracleViolationError: If check-inequalities or monitor finds violations.
        FxtspError: Any other package error; main maps it to its exit code.
    """
    settings = settings or Settings()
    logger.info(
        "Running command",
        extra={"extra_data": {"command": config.command, "system": config.system, "seed": config.seed}},
    )
    if config.command == "check-inequalities":
        return _run_check_inequalities(config, settings)

    description = _describe(config)
    if config.command == "certify":
        return _run_certify(config, description)
    if config.command == "simulate":
        return _run_simulate(config, description)
    if config.command == "sweep":
        return _run_sweep(config, description, settings)
    if config.command == "monitor":
        return _run_monitor(config, description)
    return _run_reproduce(config, description)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, configure logging and run one command."""
    args = build_parser().parse_args(argv)
    try:
        settings = Settings()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    setup_logging(level=args.log_level or settings.log_level, json_format=settings.json_logs)

    try:
        config = load_run_config(args.command, args.config, _overrides(args))
        return run(config, settings)
    except IntegrationError as e:
        logger.error("Integration failed", extra={"extra_data": {"error": str(e), "time": e.time}})
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FxtspError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
