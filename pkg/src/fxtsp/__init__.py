"""fxtsp - fixed-time stability certificates and simulation for singularly perturbed systems."""

__version__ = "0.1.0"

from fxtsp.certify import (
    Benchmark,
    BoundaryCertificate,
    CompositeCertificate,
    PowerLawCertificate,
    assemble_certificate,
    epsilon_star,
    feasible_theta,
    settling_time_bound,
)
from fxtsp.config import Settings, load_run_config
from fxtsp.exceptions import (
    CertificateInfeasibleError,
    FxtspError,
    InadmissibleQError,
    IntegrationError,
    OracleViolationError,
)
from fxtsp.inequalities import run_suite
from fxtsp.logging import get_logger, setup_logging
from fxtsp.models import (
    CertificateInputs,
    GradFlowParams,
    HighOrderParams,
    IntegratorConfig,
    InterconnectionBounds,
    RunConfig,
)
from fxtsp.simulate import Trajectory, integrate, monitor_lyapunov, settling_time, sweep
from fxtsp.system import SystemModel

__all__ = [
    "Benchmark",
    "BoundaryCertificate",
    "CertificateInfeasibleError",
    "CertificateInputs",
    "CompositeCertificate",
    "FxtspError",
    "GradFlowParams",
    "HighOrderParams",
    "InadmissibleQError",
    "IntegrationError",
    "IntegratorConfig",
    "InterconnectionBounds",
    "OracleViolationError",
    "PowerLawCertificate",
    "RunConfig",
    "Settings",
    "SystemModel",
    "Trajectory",
    "assemble_certificate",
    "epsilon_star",
    "feasible_theta",
    "get_logger",
    "integrate",
    "load_run_config",
    "monitor_lyapunov",
    "run_suite",
    "settling_time",
    "settling_time_bound",
    "setup_logging",
    "sweep",
]
