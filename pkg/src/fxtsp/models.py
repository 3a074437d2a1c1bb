"""Pydantic models for parameters, configuration and reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Any, Literal, TypeAlias

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fxtsp.powers import FloatArray

Command: TypeAlias = Literal["certify", "simulate", "sweep", "check-inequalities", "monitor", "reproduce"]
SolverMethod: TypeAlias = Literal["RK45", "DOP853"]
PositiveFloat: TypeAlias = Annotated[float, Field(gt=0)]

DEFAULT_SEED = 0xF1C5ED
DEFAULT_EPS = 1e-3
DEFAULT_MAGNITUDES = (1.0, 10.0, 1e2, 1e3, 1e4, 1e6)


class InterconnectionBounds(BaseModel):
    """The six scalars bounding the interconnection terms I1 and I2."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    chi1: float = Field(description="Cross-term coefficient for I1")
    delta1: float = Field(description="Slow quadratic coefficient for I1")
    c1: float = Field(description="Fast quadratic coefficient for I1")
    chi2: float = Field(description="Cross-term coefficient for I2")
    delta2: float = Field(description="Slow quadratic coefficient for I2")
    c2: float = Field(description="Fast quadratic coefficient for I2")

    @field_validator("chi1", "delta1", "c1", "chi2", "delta2", "c2")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"interconnection bound must be finite, got {v}")
        return v

    def admits_slow_margin(self, k_lower: float) -> bool:
        """True when some theta in (0, 1) makes the slow diagonal entry positive."""
        return self.delta1 < k_lower / 2 or self.delta2 < 0


class CertificateInputs(BaseModel):
    """Constants entering the composite certificate."""

    model_config = ConfigDict(extra="forbid")

    k1: PositiveFloat = Field(description="Reduced decay gain for V^a1")
    k2: PositiveFloat = Field(description="Reduced decay gain for V^a2")
    a1: PositiveFloat = Field(description="Reduced exponent in (0, 1)")
    a2: PositiveFloat = Field(description="Reduced exponent above 1")
    kappa1: PositiveFloat = Field(description="Boundary-layer decay gain for W^b1")
    kappa2: PositiveFloat = Field(description="Boundary-layer decay gain for W^b2")
    b1: PositiveFloat = Field(description="Boundary-layer exponent in (0, 1)")
    b2: PositiveFloat = Field(description="Boundary-layer exponent above 1")
    chi1: float
    delta1: float
    c1: float
    chi2: float
    delta2: float
    c2: float

    @property
    def bounds(self) -> InterconnectionBounds:
        return InterconnectionBounds(
            chi1=self.chi1, delta1=self.delta1, c1=self.c1, chi2=self.chi2, delta2=self.delta2, c2=self.c2
        )


class CertificateRecord(CertificateInputs):
    """Serialized composite certificate."""

    theta: float = Field(gt=0, lt=1)
    eps_star: float = Field(gt=0, description="Time-scale threshold; may be infinite")
    gamma1: float
    gamma2: float
    settling_bound: float = Field(ge=0, description="Settling-time bound in time units")


class IntegratorConfig(BaseModel):
    """Step control, horizon and settle detection for trajectory integration."""

    model_config = ConfigDict(extra="forbid")

    rel_tol: PositiveFloat = 1e-8
    abs_tol: PositiveFloat = 1e-10
    dt_init: PositiveFloat = 1e-6
    dt_max_per_eps: PositiveFloat = 0.2
    t_max: PositiveFloat = 50.0
    settle_radius: PositiveFloat = 1e-6
    dwell: PositiveFloat = 1.0
    lock_radius: PositiveFloat = Field(
        default=1e-4, description="Largest offset at which a stiff coordinate held by the field is locked at zero"
    )
    method: SolverMethod = "RK45"
    max_steps: int = Field(default=2_000_000, ge=1)

    @model_validator(mode="after")
    def validate_dwell(self) -> IntegratorConfig:
        if self.dwell > self.t_max:
            raise ValueError(f"dwell ({self.dwell}) must not exceed t_max ({self.t_max})")
        return self


def _matrix(value: list[list[float]], label: str) -> FloatArray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{label} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} must be finite")
    return arr


class GradFlowParams(BaseModel):
    """Parameters of the fixed-time gradient flow driving a fixed-time plant."""

    model_config = ConfigDict(extra="forbid")

    Q: list[list[float]] = Field(description="Cost Hessian with real positive eigenvalues")
    A: list[list[float]] = Field(description="Plant matrix")
    B: list[list[float]] = Field(description="Nonsingular input matrix")
    k: PositiveFloat = Field(default=1.0, description="Gradient-flow gain")
    nu: PositiveFloat = Field(default=6.0, description="Plant feedback gain")
    xi1: float = Field(default=1 / 3, gt=0, lt=1)
    xi2: float = Field(default=-2 / 3, lt=0)

    @field_validator("Q")
    @classmethod
    def validate_q(cls, v: list[list[float]]) -> list[list[float]]:
        eigenvalues = np.linalg.eigvals(_matrix(v, "Q"))
        if np.any(np.abs(eigenvalues.imag) > 1e-12 * max(1.0, float(np.max(np.abs(eigenvalues))))):
            raise ValueError(f"Q must have real eigenvalues, got {eigenvalues.tolist()}")
        if np.any(eigenvalues.real <= 0):
            raise ValueError(f"Q must have positive eigenvalues, got {eigenvalues.real.tolist()}")
        return v

    @field_validator("B")
    @classmethod
    def validate_b(cls, v: list[list[float]]) -> list[list[float]]:
        condition = float(np.linalg.cond(_matrix(v, "B")))
        if not condition < 1e15:
            raise ValueError(f"B must be nonsingular, condition number {condition:.3e}")
        return v

    @model_validator(mode="after")
    def validate_shapes(self) -> GradFlowParams:
        n = len(self.Q)
        for label, value in (("A", self.A), ("B", self.B)):
            if _matrix(value, label).shape != (n, n):
                raise ValueError(f"{label} must be {n}x{n} to match Q")
        return self

    @property
    def dim(self) -> int:
        return len(self.Q)

    @property
    def q_matrix(self) -> FloatArray:
        return np.asarray(self.Q, dtype=np.float64)

    @property
    def a_matrix(self) -> FloatArray:
        return np.asarray(self.A, dtype=np.float64)

    @property
    def b_matrix(self) -> FloatArray:
        return np.asarray(self.B, dtype=np.float64)


class HighOrderParams(BaseModel):
    """Parameters of the second-order system with fixed-time parasitic dynamics."""

    model_config = ConfigDict(extra="forbid")

    xi1: float = Field(default=1 / 3, gt=0, lt=1)
    xi2: float = Field(default=1 / 4, gt=0, lt=1)
    mu: float = Field(default=0.4, gt=0, lt=0.5)
    q: PositiveFloat | None = Field(default=None, description="Splitting constant; chosen by admissibility when absent")

    @model_validator(mode="after")
    def validate_order(self) -> HighOrderParams:
        if self.xi2 > self.xi1:
            raise ValueError(f"xi2 ({self.xi2}) must not exceed xi1 ({self.xi1})")
        return self


class SystemDescription(BaseModel):
    """Custom system file: a benchmark kind with parameters, or bare certificate constants."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["gradflow", "highorder"] | None = None
    params: dict[str, Any] = Field(default_factory=dict)
    mu: PositiveFloat | None = None
    q: PositiveFloat | None = None
    certificate: CertificateInputs | None = None

    @model_validator(mode="after")
    def validate_form(self) -> SystemDescription:
        if (self.kind is None) == (self.certificate is None):
            raise ValueError("give exactly one of 'kind' or 'certificate'")
        if self.certificate is not None and (self.params or self.mu is not None or self.q is not None):
            raise ValueError("'certificate' cannot be combined with params, mu or q")
        return self


class RunConfig(BaseModel):
    """One command-line run, merged from flags, a config file and defaults."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    system: str = Field(default="highorder", description="'gradflow', 'highorder' or a JSON description path")
    eps: PositiveFloat | None = None
    theta: float | None = Field(default=None, gt=0, lt=1)
    mu: PositiveFloat | None = None
    q: PositiveFloat | None = None
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    samples: int = Field(default=100_000, ge=1)
    shards: int = Field(default=1, ge=1)
    lemmas: list[str] | None = Field(default=None, description="Oracle subset for check-inequalities")
    out: Path | None = None
    magnitudes: list[float] = Field(default_factory=lambda: list(DEFAULT_MAGNITUDES))
    directions: int = Field(default=8, ge=1)
    fast_only: bool = False
    rate_mode: bool = False
    x0: list[float] | None = None
    z0: list[float] | None = None
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)

    @field_validator("magnitudes")
    @classmethod
    def validate_magnitudes(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("magnitudes must not be empty")
        if any(m < 0 for m in v):
            raise ValueError("magnitudes must be nonnegative")
        if any(b < a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("magnitudes must be sorted ascending")
        return v

    @model_validator(mode="after")
    def validate_command_fields(self) -> RunConfig:
        if self.command in ("simulate", "sweep") and self.out is None:
            raise ValueError(f"'{self.command}' requires an output path")
        if (self.x0 is None) != (self.z0 is None):
            raise ValueError("x0 and z0 must be given together")
        return self


class LemmaReport(BaseModel):
    """Outcome of one randomized inequality oracle."""

    samples: int
    violations: int
    worst_gap: float = Field(description="Smallest gap divided by |left| + |right|")
    witness: dict[str, Any] | None = Field(default=None, description="Inputs attaining worst_gap")
    tightness: float | None = Field(default=None, description="Smallest gap divided by the right side")


class InequalityReport(BaseModel):
    """Per-lemma results of the randomized oracle suite."""

    seed: int
    samples: int
    shards: int
    violations: int
    lemmas: dict[str, LemmaReport]


class MonitorReport(BaseModel):
    """Lyapunov monitoring verdict along a trajectory or over sampled states."""

    mode: Literal["monotone", "rate", "states"]
    samples: int
    checked: int
    violations: int
    worst_violation: float = Field(description="Largest excess over the allowed value, 0 when none")
    worst_time: float | None = None
    transient_window: float = 0.0


class ReproductionEntry(BaseModel):
    """A computed quantity beside its quoted reference value."""

    computed: float
    reference: float | None = None
    rel_deviation: float | None = None

    @classmethod
    def compare(cls, computed: float, reference: float | None = None) -> ReproductionEntry:
        deviation = None
        if reference is not None and reference != 0 and math.isfinite(computed):
            deviation = abs(computed - reference) / abs(reference)
        return cls(computed=computed, reference=reference, rel_deviation=deviation)


class ReproductionReport(BaseModel):
    """Comparison table for a benchmark reproduction."""

    benchmark: str
    entries: dict[str, ReproductionEntry]
    certificate: CertificateRecord | None = None
    checks: dict[str, LemmaReport] = Field(default_factory=dict)
    monitor: MonitorReport | None = None
    notes: list[str] = Field(default_factory=list)


class SimulationSummary(BaseModel):
    """Scalar summary written next to a trajectory CSV."""

    system: str
    eps: float
    x0: list[float]
    z0: list[float]
    samples: int
    t_final: float
    final_norm: float
    settle_time: float | None
    nfev: int
    step_rejections: int
    method: SolverMethod
    certificate: CertificateRecord | None = None
