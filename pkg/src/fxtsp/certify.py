"""Composite Lyapunov certificates for fixed-time stability of singularly perturbed systems.

Given a reduced certificate V, a boundary-layer certificate W and bounds on
the interconnection terms, the composite function

    Psi(x, y) = theta * V(x) + (1 - theta) * W(x, y)

decreases at a fixed-time rate whenever the 2x2 matrix P(theta, eps) is
positive definite, which holds for every eps below a threshold eps_star.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, TypeAlias

import numpy as np

from fxtsp.exceptions import (
    CapabilityError,
    CertificateInfeasibleError,
    DomainError,
    InvalidParameterError,
    ShapeError,
)
from fxtsp.logging import get_logger
from fxtsp.models import CertificateInputs, CertificateRecord, InterconnectionBounds, LemmaReport
from fxtsp.powers import FloatArray, as_result, nonneg_power
from fxtsp.system import SystemModel, boundary_layer_field, reduced_field

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

logger = get_logger(__name__)

ScalarMap: TypeAlias = Callable[[FloatArray], float]
GradientMap: TypeAlias = Callable[[FloatArray], FloatArray]
PairScalarMap: TypeAlias = Callable[[FloatArray, FloatArray], float]
PairGradientMap: TypeAlias = Callable[[FloatArray, FloatArray], FloatArray]

THETA_GRID = np.arange(1, 1000) / 1000.0
DECREASE_SLACK = 1e-6
ASSUMPTION_SLACK = 1e-9


@dataclass(frozen=True)
class QuadraticSandwich:
    """Class-K bounds lower * r**2 <= value <= upper * r**2."""

    lower: float
    upper: float

    def holds(self, value: float, r: float, rel_tol: float = 1e-12) -> bool:
        slack = rel_tol * max(abs(value), r * r)
        return self.lower * r * r - slack <= value <= self.upper * r * r + slack


def _check_exponents(low: float, high: float, label: str) -> None:
    if not 0 < low < 1 < high:
        raise InvalidParameterError(f"{label} exponents must satisfy 0 < low < 1 < high, got ({low}, {high})")


@dataclass(frozen=True)
class PowerLawCertificate:
    """Reduced-system certificate: V' <= -k1 V^a1 - k2 V^a2 along the reduced dynamics."""

    k1: float
    k2: float
    a1: float
    a2: float
    V: ScalarMap
    gradV: GradientMap | None = None
    sandwich: QuadraticSandwich | None = None

    def __post_init__(self) -> None:
        if not (self.k1 > 0 and self.k2 > 0):
            raise InvalidParameterError(f"decay gains must be positive, got k1={self.k1}, k2={self.k2}")
        _check_exponents(self.a1, self.a2, "reduced")

    @property
    def k_lower(self) -> float:
        return min(self.k1, self.k2)

    def tilde(self, x: FloatArray) -> float:
        return float(tilde_value(self.V(x), self.a1, self.a2))


@dataclass(frozen=True)
class BoundaryCertificate:
    """Boundary-layer certificate: W' <= -kappa1 W^b1 - kappa2 W^b2 in stretched time."""

    kappa1: float
    kappa2: float
    b1: float
    b2: float
    W: PairScalarMap
    gradW_x: PairGradientMap | None = None
    gradW_y: PairGradientMap | None = None
    sandwich: QuadraticSandwich | None = None

    def __post_init__(self) -> None:
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise InvalidParameterError(
                f"decay gains must be positive, got kappa1={self.kappa1}, kappa2={self.kappa2}"
            )
        _check_exponents(self.b1, self.b2, "boundary-layer")

    @property
    def kappa_lower(self) -> float:
        return min(self.kappa1, self.kappa2)

    def tilde(self, x: FloatArray, y: FloatArray) -> float:
        return float(tilde_value(self.W(x, y), self.b1, self.b2))


def tilde_value(v: ArrayLike, p_low: float, p_high: float) -> float | FloatArray:
    """Return v^(p_low/2) + v^(p_high/2).

    Raises:
        DomainError: If v is negative.
    """
    values = np.asarray(v, dtype=np.float64)
    if np.any(values < 0):
        raise DomainError(f"tilde_value needs a nonnegative argument, got {v}")
    return as_result(nonneg_power(values, p_low / 2) + nonneg_power(values, p_high / 2))


def _check_theta(theta: float) -> None:
    if not 0 < theta < 1:
        raise InvalidParameterError(f"theta must lie in (0, 1), got {theta}")


def p_entries(
    k_lower: float, kappa_lower: float, bounds: InterconnectionBounds, theta: float
) -> tuple[float, float, float, float]:
    """Return (P11, P12, P22 coefficient, P22 offset) with P22 = coefficient/eps - offset."""
    p11 = theta * k_lower / 2 - theta * bounds.delta1 - (1 - theta) * bounds.delta2
    p12 = -0.5 * (theta * bounds.chi1 + (1 - theta) * bounds.chi2)
    p22_coefficient = (1 - theta) * kappa_lower / 2
    p22_offset = theta * bounds.c1 + (1 - theta) * bounds.c2
    return p11, p12, p22_coefficient, p22_offset


def build_P(
    k_lower: float, kappa_lower: float, bounds: InterconnectionBounds, theta: float, eps: float
) -> FloatArray:
    """Assemble the symmetric 2x2 matrix P(theta, eps).

    Raises:
        InvalidParameterError: If theta is outside (0, 1) or eps is not positive.
    """
    _check_theta(theta)
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    p11, p12, coefficient, offset = p_entries(k_lower, kappa_lower, bounds, theta)
    return np.array([[p11, p12], [p12, coefficient / eps - offset]])


def _eps_star_from_entries(p11: float, p12: float, coefficient: float, offset: float) -> float:
    denominator = p12 * p12 / p11 + offset
    if denominator <= 0:
        return math.inf
    return coefficient / denominator


def epsilon_star(k_lower: float, kappa_lower: float, bounds: InterconnectionBounds, theta: float) -> float:
    """Closed-form root of det P(eps) = 0; P is positive definite for every eps below it.

    Raises:
        CertificateInfeasibleError: If P11(theta) is not positive.
    """
    _check_theta(theta)
    if not kappa_lower > 0:
        raise InvalidParameterError(f"kappa_lower must be positive, got {kappa_lower}")
    p11, p12, coefficient, offset = p_entries(k_lower, kappa_lower, bounds, theta)
    if p11 <= 0:
        raise CertificateInfeasibleError(f"P11 = {p11:.6g} is not positive at theta = {theta}")
    return _eps_star_from_entries(p11, p12, coefficient, offset)


def feasible_theta(k_lower: float, bounds: InterconnectionBounds) -> float:
    """Pick theta on a 1e-3 grid maximizing eps_star among those with P11 > 0.

    Ties go to the smaller theta. kappa_lower scales eps_star uniformly, so
    it does not affect the choice.

    Raises:
        CertificateInfeasibleError: If delta1 >= k_lower/2 with delta2 >= 0, or no grid point is feasible.
    """
    if not bounds.admits_slow_margin(k_lower):
        raise CertificateInfeasibleError(
            f"need delta1 < k_lower/2 or delta2 < 0, got delta1={bounds.delta1}, delta2={bounds.delta2}, "
            f"k_lower={k_lower}"
        )

    theta = THETA_GRID
    p11 = theta * k_lower / 2 - theta * bounds.delta1 - (1 - theta) * bounds.delta2
    p12 = -0.5 * (theta * bounds.chi1 + (1 - theta) * bounds.chi2)
    offset = theta * bounds.c1 + (1 - theta) * bounds.c2
    feasible = p11 > 0
    if not np.any(feasible):
        raise CertificateInfeasibleError("no theta on the 1e-3 grid gives P11 > 0")

    safe_p11 = np.where(feasible, p11, 1.0)
    denominator = p12 * p12 / safe_p11 + offset
    with np.errstate(divide="ignore"):
        eps = np.where(denominator > 0, (1 - theta) / 2 / np.where(denominator > 0, denominator, 1.0), np.inf)
    eps = np.where(feasible, eps, -np.inf)
    return float(theta[int(np.argmax(eps))])


def select_gammas(a1: float, a2: float, b1: float, b2: float) -> tuple[float, float]:
    """Midpoints of (max(a1, b1), 1) and (1, min(a2, b2)).

    Raises:
        InvalidParameterError: If the exponents are not ordered 0 < a1, b1 < 1 < a2, b2.
    """
    _check_exponents(a1, a2, "reduced")
    _check_exponents(b1, b2, "boundary-layer")
    return (max(a1, b1) + 1) / 2, (1 + min(a2, b2)) / 2


def comparison_settling_bound(c1: float, p1: float, c2: float, p2: float) -> float:
    """Settling-time bound for v' <= -c1 v^p1 - c2 v^p2.

    Returns 1/(c1 (1 - p1)) + 1/(c2 (p2 - 1)), uniform in the initial value.

    Raises:
        DomainError: If a gain is not positive or the exponents are not 0 < p1 < 1 < p2.
    """
    if not (c1 > 0 and c2 > 0):
        raise DomainError(f"comparison gains must be positive, got c1={c1}, c2={c2}")
    if not 0 < p1 < 1 < p2:
        raise DomainError(f"comparison exponents must satisfy 0 < p1 < 1 < p2, got ({p1}, {p2})")
    return 1 / (c1 * (1 - p1)) + 1 / (c2 * (p2 - 1))


def settling_time_bound(lambda_min: float, gamma1: float, gamma2: float) -> float:
    """Settling bound for Psi' <= -(lambda/2)(Psi^gamma1 + 2^(1-gamma2) Psi^gamma2).

    Evaluates to 2/(lambda (1 - gamma1)) + 2^gamma2/(lambda (gamma2 - 1)).
    """
    if not lambda_min > 0:
        raise DomainError(f"lambda_min must be positive, got {lambda_min}")
    c1 = lambda_min / 2
    return comparison_settling_bound(c1, gamma1, c1 * 2.0 ** (1 - gamma2), gamma2)


def composite_value(theta: float, V_val: ArrayLike, W_val: ArrayLike) -> float | FloatArray:
    """Psi = theta V + (1 - theta) W."""
    _check_theta(theta)
    v = np.asarray(V_val, dtype=np.float64)
    w = np.asarray(W_val, dtype=np.float64)
    if np.any(v < 0) or np.any(w < 0):
        raise DomainError("Lyapunov values must be nonnegative")
    return as_result(theta * v + (1 - theta) * w)


def composite_lie_derivative(
    model: SystemModel,
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    theta: float,
    eps: float,
    x: ArrayLike,
    y: ArrayLike,
) -> float:
    """Analytic derivative of Psi along the shifted dynamics at (x, y).

    Raises:
        CapabilityError: If a certificate lacks a gradient evaluator.
    """
    if rc.gradV is None or bc.gradW_x is None or bc.gradW_y is None:
        raise CapabilityError("composite Lie derivative needs gradV, gradW_x and gradW_y")
    _check_theta(theta)
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")

    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != (model.slow_dim,) or yv.shape != (model.fast_dim,):
        raise ShapeError(f"expected x{(model.slow_dim,)} and y{(model.fast_dim,)}, got {xv.shape} and {yv.shape}")

    z = yv + model.h(xv)
    slow = model.f(xv, z)
    fast = model.g(xv, z) / eps - model.dh(xv) @ slow
    v_dot = float(rc.gradV(xv) @ slow)
    w_dot = float(bc.gradW_x(xv, yv) @ slow) + float(bc.gradW_y(xv, yv) @ fast)
    return theta * v_dot + (1 - theta) * w_dot


def lambda_min_2x2(P: ArrayLike) -> float:
    """Smaller eigenvalue of a symmetric 2x2 matrix in closed form.

    For positive trace it is computed as det/lambda_max, which keeps tiny
    eigenvalues of badly scaled matrices accurate.

    Raises:
        ShapeError: If P is not 2x2.
        InvalidParameterError: If P is asymmetric beyond 1e-12.
    """
    matrix = np.asarray(P, dtype=np.float64)
    if matrix.shape != (2, 2):
        raise ShapeError(f"expected a 2x2 matrix, got shape {matrix.shape}")
    a, b, c, d = matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1]
    if abs(b - c) > 1e-12 * max(1.0, float(np.max(np.abs(matrix)))):
        raise InvalidParameterError(f"matrix is not symmetric: P12={b}, P21={c}")

    mid = (a + d) / 2
    radius = math.hypot((a - d) / 2, b)
    if mid > 0:
        return float((a * d - b * b) / (mid + radius))
    return float(mid - radius)


@dataclass(frozen=True)
class CompositeCertificate:
    """Composite certificate: theta, eps_star, gammas and a settling bound at eps."""

    theta: float
    eps_star: float
    gamma1: float
    gamma2: float
    eps: float
    settling_bound: float
    k_lower: float
    kappa_lower: float
    bounds: InterconnectionBounds

    def P_at(self, eps: float) -> FloatArray:
        return build_P(self.k_lower, self.kappa_lower, self.bounds, self.theta, eps)

    def lambda_min_at(self, eps: float) -> float:
        return lambda_min_2x2(self.P_at(eps))

    @property
    def lambda_min(self) -> float:
        return self.lambda_min_at(self.eps)

    def to_record(self, inputs: CertificateInputs) -> CertificateRecord:
        return CertificateRecord(
            **inputs.model_dump(),
            theta=self.theta,
            eps_star=self.eps_star,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            settling_bound=self.settling_bound,
        )


def assemble_certificate(
    inputs: CertificateInputs, theta: float | None = None, eps: float | None = None
) -> CompositeCertificate:
    """Run the full certificate pipeline from its constants.

    Args:
        inputs: Decay constants and interconnection bounds
        theta: Blend weight; chosen by feasible_theta when omitted
        eps: Operating time-scale parameter for the settling bound; defaults
            to eps_star/2, or 1 when eps_star is infinite

    Raises:
        CertificateInfeasibleError: If no feasible theta exists or eps >= eps_star.
        InvalidParameterError: If the exponents are misordered.
    """
    k_lower = min(inputs.k1, inputs.k2)
    kappa_lower = min(inputs.kappa1, inputs.kappa2)
    bounds = inputs.bounds
    gamma1, gamma2 = select_gammas(inputs.a1, inputs.a2, inputs.b1, inputs.b2)

    if theta is None:
        theta = feasible_theta(k_lower, bounds)
    eps_star = epsilon_star(k_lower, kappa_lower, bounds, theta)

    if eps is None:
        eps = eps_star / 2 if math.isfinite(eps_star) else 1.0
    elif eps >= eps_star:
        raise CertificateInfeasibleError(f"eps = {eps:.6g} is not below eps_star = {eps_star:.6g}")

    lam = lambda_min_2x2(build_P(k_lower, kappa_lower, bounds, theta, eps))
    if lam <= 0:
        raise CertificateInfeasibleError(f"P is not positive definite at eps = {eps:.6g} (lambda_min = {lam:.6g})")

    certificate = CompositeCertificate(
        theta=theta,
        eps_star=eps_star,
        gamma1=gamma1,
        gamma2=gamma2,
        eps=eps,
        settling_bound=settling_time_bound(lam, gamma1, gamma2),
        k_lower=k_lower,
        kappa_lower=kappa_lower,
        bounds=bounds,
    )
    logger.info(
        "Assembled composite certificate",
        extra={"extra_data": {"theta": theta, "eps_star": eps_star, "eps": eps, "lambda_min": lam}},
    )
    return certificate


def certificate_inputs(
    rc: PowerLawCertificate, bc: BoundaryCertificate, bounds: InterconnectionBounds
) -> CertificateInputs:
    """Collect the certificate constants into a serializable record."""
    return CertificateInputs(
        k1=rc.k1,
        k2=rc.k2,
        a1=rc.a1,
        a2=rc.a2,
        kappa1=bc.kappa1,
        kappa2=bc.kappa2,
        b1=bc.b1,
        b2=bc.b2,
        **bounds.model_dump(),
    )


@dataclass(frozen=True)
class Benchmark:
    """A model bundled with its certificates and interconnection bounds."""

    model: SystemModel
    reduced: PowerLawCertificate
    boundary: BoundaryCertificate
    bounds: InterconnectionBounds

    def inputs(self) -> CertificateInputs:
        return certificate_inputs(self.reduced, self.boundary, self.bounds)

    def certify(self, theta: float | None = None, eps: float | None = None) -> CompositeCertificate:
        return assemble_certificate(self.inputs(), theta=theta, eps=eps)


def sample_states(
    n_slow: int, n_fast: int, count: int, rng: np.random.Generator, low: float = 1e-6, high: float = 1e6
) -> tuple[FloatArray, FloatArray]:
    """Draw states with uniformly random directions and log-uniform norms in [low, high]."""

    def draw(dim: int) -> FloatArray:
        directions = rng.standard_normal((count, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = 10.0 ** rng.uniform(math.log10(low), math.log10(high), size=(count, 1))
        return directions * radii

    return draw(n_slow), draw(n_fast)


def decrease_margin(
    model: SystemModel,
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    certificate: CompositeCertificate,
    eps: float,
    x: ArrayLike,
    y: ArrayLike,
) -> tuple[float, float]:
    """Return (allowed - actual, scale) for the fixed-time decrease inequality at (x, y).

    The allowed rate is -(lambda_min/2)(Psi^gamma1 + 2^(1-gamma2) Psi^gamma2)
    with lambda_min taken at eps.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    lam = certificate.lambda_min_at(eps)
    psi = float(composite_value(certificate.theta, rc.V(xv), bc.W(xv, yv)))
    allowed = -(lam / 2) * (
        float(nonneg_power(psi, certificate.gamma1)) + 2.0 ** (1 - certificate.gamma2) * float(
            nonneg_power(psi, certificate.gamma2)
        )
    )
    actual = composite_lie_derivative(model, rc, bc, certificate.theta, eps, xv, yv)
    return allowed - actual, max(abs(allowed), abs(actual))


def oracle_report(gaps: FloatArray, scales: FloatArray, slack: float, witness: list[dict[str, Any]]) -> LemmaReport:
    """Count gaps below -slack * scale and locate the worst normalized gap."""
    normalized = gaps / np.maximum(scales, np.finfo(np.float64).tiny)
    violations = int(np.count_nonzero(gaps < -slack * scales))
    worst = int(np.argmin(normalized)) if normalized.size else 0
    return LemmaReport(
        samples=int(gaps.size),
        violations=violations,
        worst_gap=float(normalized[worst]) if normalized.size else 0.0,
        witness=witness[worst] if witness else None,
    )


def check_decrease(
    model: SystemModel,
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    certificate: CompositeCertificate,
    eps: float,
    xs: FloatArray,
    ys: FloatArray,
    slack: float = DECREASE_SLACK,
) -> LemmaReport:
    """Check the fixed-time decrease inequality at every sampled (x, y)."""
    results = [decrease_margin(model, rc, bc, certificate, eps, x, y) for x, y in zip(xs, ys, strict=True)]
    gaps = np.array([gap for gap, _ in results])
    scales = np.array([scale for _, scale in results])
    witness = [{"x": x.tolist(), "y": y.tolist()} for x, y in zip(xs, ys, strict=True)]
    report = oracle_report(gaps, scales, slack, witness)
    logger.info(
        "Checked composite decrease",
        extra={
            "extra_data": {
                "model": model.name,
                "eps": eps,
                "samples": report.samples,
                "violations": report.violations,
            }
        },
    )
    return report


def check_reduced_decrease(
    model: SystemModel, rc: PowerLawCertificate, xs: FloatArray, slack: float = ASSUMPTION_SLACK
) -> LemmaReport:
    """Check <gradV(x), f(x, h(x))> <= -k1 V^a1 - k2 V^a2 at sampled x."""
    if rc.gradV is None:
        raise CapabilityError("reduced decrease check needs gradV")
    gaps, scales = [], []
    for x in xs:
        v = rc.V(x)
        lhs = float(rc.gradV(x) @ reduced_field(model, x))
        rhs = -rc.k1 * float(nonneg_power(v, rc.a1)) - rc.k2 * float(nonneg_power(v, rc.a2))
        gaps.append(rhs - lhs)
        scales.append(abs(lhs) + abs(rhs))
    return oracle_report(np.array(gaps), np.array(scales), slack, [{"x": x.tolist()} for x in xs])


def check_boundary_decrease(
    model: SystemModel, bc: BoundaryCertificate, xs: FloatArray, ys: FloatArray, slack: float = ASSUMPTION_SLACK
) -> LemmaReport:
    """Check <gradW_y(x, y), g(x, y + h(x))> <= -kappa1 W^b1 - kappa2 W^b2 at sampled (x, y)."""
    if bc.gradW_y is None:
        raise CapabilityError("boundary-layer decrease check needs gradW_y")
    gaps, scales = [], []
    for x, y in zip(xs, ys, strict=True):
        w = bc.W(x, y)
        lhs = float(bc.gradW_y(x, y) @ boundary_layer_field(model, x, y))
        rhs = -bc.kappa1 * float(nonneg_power(w, bc.b1)) - bc.kappa2 * float(nonneg_power(w, bc.b2))
        gaps.append(rhs - lhs)
        scales.append(abs(lhs) + abs(rhs))
    witness = [{"x": x.tolist(), "y": y.tolist()} for x, y in zip(xs, ys, strict=True)]
    return oracle_report(np.array(gaps), np.array(scales), slack, witness)


def check_interconnection(
    terms: Callable[[FloatArray, FloatArray], tuple[float, float]],
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    bounds: InterconnectionBounds,
    xs: FloatArray,
    ys: FloatArray,
    slack: float = ASSUMPTION_SLACK,
) -> tuple[LemmaReport, LemmaReport]:
    """Check I1 and I2 against their chi/delta/c quadratic forms in (V~, W~) at sampled states.

    Args:
        terms: Closed-form interconnection terms (I1, I2) at (x, y)
        rc: Reduced certificate providing V~
        bc: Boundary-layer certificate providing W~
        bounds: The six interconnection bounds
        xs: Slow states, one per row
        ys: Fast offsets, one per row
        slack: Relative tolerance on each gap
    """
    gaps1, gaps2, scales1, scales2 = [], [], [], []
    for x, y in zip(xs, ys, strict=True):
        v_tilde, w_tilde = rc.tilde(x), bc.tilde(x, y)
        i1, i2 = terms(x, y)
        rhs1 = bounds.chi1 * v_tilde * w_tilde + bounds.delta1 * v_tilde**2 + bounds.c1 * w_tilde**2
        rhs2 = bounds.chi2 * v_tilde * w_tilde + bounds.delta2 * v_tilde**2 + bounds.c2 * w_tilde**2
        gaps1.append(rhs1 - i1)
        gaps2.append(rhs2 - i2)
        scales1.append(abs(rhs1) + abs(i1))
        scales2.append(abs(rhs2) + abs(i2))
    witness = [{"x": x.tolist(), "y": y.tolist()} for x, y in zip(xs, ys, strict=True)]
    return (
        oracle_report(np.array(gaps1), np.array(scales1), slack, witness),
        oracle_report(np.array(gaps2), np.array(scales2), slack, witness),
    )
