"""Fixed-time gradient flow driving a fixed-time plant.

The slow state follows a fixed-time gradient flow on the quadratic cost
phi(z) = z'Qz/2 evaluated at the plant state z, and the plant is steered
onto z = x by the feedback u = -B^-1 A x + B^-1 u2, which leaves

    x' = -k (Qz/|Qz|^xi1 + Qz/|Qz|^xi2)
    eps z' = A(z - x) - nu ((z - x)/|z - x|^xi1 + (z - x)/|z - x|^xi2)
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from fxtsp.certify import (
    Benchmark,
    BoundaryCertificate,
    PowerLawCertificate,
    QuadraticSandwich,
    assemble_certificate,
    build_P,
    check_boundary_decrease,
    check_decrease,
    check_interconnection,
    check_reduced_decrease,
    epsilon_star,
    lambda_min_2x2,
    p_entries,
    sample_states,
)
from fxtsp.exceptions import CertificateInfeasibleError, InadmissibleQError, InvalidParameterError, PreconditionError
from fxtsp.inequalities import (
    AlphaMaps,
    alpha_pair,
    combine_pairs,
    published_alpha_pair,
    tilde_lower_constants,
    upsilon2_delta,
    upsilon_total,
)
from fxtsp.logging import get_logger
from fxtsp.models import (
    DEFAULT_SEED,
    CertificateInputs,
    GradFlowParams,
    InterconnectionBounds,
    ReproductionEntry,
    ReproductionReport,
)
from fxtsp.powers import FloatArray, power_term
from fxtsp.system import SystemModel

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import ArrayLike

logger = get_logger(__name__)

REFERENCE_Q = [[3.0, 2.0], [3.0, 5.0]]
REFERENCE_MU = 0.1
REFERENCE_Q_CONSTANT = 3000.0
REFERENCE_THETA = 2 / 3
# Implied by the quoted P22 entry; the gains behind it are not stated.
REFERENCE_KAPPA_LOWER = 0.27
QUOTED_ETA = 0.0002
Q_GRID_RATIO = 1.05
Q_GRID_LIMIT = 20_000

REFERENCE_X0 = (2.0, -1.0)
REFERENCE_Z0 = (-1.5, 3.0)


def default_params() -> GradFlowParams:
    """Reference cost with A = -I, B = I, nu = 6, k = 1, xi1 = 1/3, xi2 = -2/3."""
    return GradFlowParams(
        Q=REFERENCE_Q,
        A=[[-1.0, 0.0], [0.0, -1.0]],
        B=[[1.0, 0.0], [0.0, 1.0]],
    )


def eigen_extremes(Q: ArrayLike) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a matrix with real positive spectrum.

    2x2 matrices use the characteristic polynomial; larger ones use
    scipy.linalg.eigvals and reject complex pairs.

    Raises:
        InvalidParameterError: If an eigenvalue is complex or not positive.
    """
    matrix = np.asarray(Q, dtype=np.float64)
    if matrix.shape == (2, 2):
        half_trace = (matrix[0, 0] + matrix[1, 1]) / 2
        det = matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0]
        disc = half_trace * half_trace - det
        if disc < -1e-12 * max(1.0, half_trace * half_trace):
            raise InvalidParameterError(f"Q has complex eigenvalues (discriminant {disc:.3e})")
        high = half_trace + math.sqrt(max(disc, 0.0))
        low = det / high if high > 0 else half_trace - math.sqrt(max(disc, 0.0))
    else:
        eigenvalues = scipy.linalg.eigvals(matrix)
        scale = max(1.0, float(np.max(np.abs(eigenvalues))))
        if np.any(np.abs(eigenvalues.imag) > 1e-12 * scale):
            raise InvalidParameterError(f"Q has complex eigenvalues {eigenvalues.tolist()}")
        low, high = float(np.min(eigenvalues.real)), float(np.max(eigenvalues.real))
    if low <= 0:
        raise InvalidParameterError(f"Q must have positive eigenvalues, smallest is {low}")
    return float(low), float(high)


def sigma_max(M: ArrayLike) -> float:
    """Largest singular value."""
    return float(np.max(scipy.linalg.svdvals(np.asarray(M, dtype=np.float64))))


def proposition_margin(params: GradFlowParams) -> float:
    """nu * lambda_min(Q) - sigma_max(QA); the gain condition holds when positive."""
    low, _ = eigen_extremes(params.q_matrix)
    return params.nu * low - sigma_max(params.q_matrix @ params.a_matrix)


def _require_margin(params: GradFlowParams) -> float:
    margin = proposition_margin(params)
    if margin <= 0:
        low, _ = eigen_extremes(params.q_matrix)
        threshold = sigma_max(params.q_matrix @ params.a_matrix) / low
        logger.error(
            "Plant gain below threshold",
            extra={"extra_data": {"nu": params.nu, "threshold": threshold}},
        )
        raise CertificateInfeasibleError(f"nu = {params.nu} must exceed sigma_max(QA)/lambda_min(Q) = {threshold:.6g}")
    return margin


def build_system(params: GradFlowParams) -> SystemModel:
    """Closed-loop model with h(x) = x.

    Raises:
        CertificateInfeasibleError: If nu does not clear the gain threshold.
    """
    _require_margin(params)
    Q, A = params.q_matrix, params.a_matrix
    k, nu, xi1, xi2 = params.k, params.nu, params.xi1, params.xi2
    n = params.dim

    def f(x: FloatArray, z: FloatArray) -> FloatArray:  # noqa: ARG001
        grad = Q @ z
        return -k * (power_term(grad, xi1) + power_term(grad, xi2))

    def g(x: FloatArray, z: FloatArray) -> FloatArray:
        e = z - x
        return A @ e - nu * (power_term(e, xi1) + power_term(e, xi2))

    def h(x: FloatArray) -> FloatArray:
        return np.array(x, dtype=np.float64)

    def dh(x: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.eye(n)

    return SystemModel(slow_dim=n, fast_dim=n, f=f, g=g, h=h, dh=dh, name="gradflow")


def _gradient_matrix(params: GradFlowParams, symmetrized: bool) -> FloatArray:
    Q = params.q_matrix
    return (Q + Q.T) / 2 if symmetrized else Q


def _sandwich(Q: FloatArray) -> QuadraticSandwich:
    eigenvalues = np.linalg.eigvalsh((Q + Q.T) / 2)
    return QuadraticSandwich(lower=float(eigenvalues[0]) / 2, upper=float(eigenvalues[-1]) / 2)


def reduced_certificate(params: GradFlowParams, symmetrized: bool = False) -> PowerLawCertificate:
    """V(x) = x'Qx/2 with the decay constants derived from the spectrum of Q.

    Args:
        params: Benchmark parameters
        symmetrized: Use the exact gradient (Q + Q')x/2 instead of Qx
    """
    low, high = eigen_extremes(params.q_matrix)
    k, xi1, xi2 = params.k, params.xi1, params.xi2
    Q = params.q_matrix
    G = _gradient_matrix(params, symmetrized)

    def V(x: FloatArray) -> float:
        return float(x @ Q @ x) / 2

    def gradV(x: FloatArray) -> FloatArray:
        return np.asarray(G @ x)

    return PowerLawCertificate(
        k1=2 ** (1 - xi1 / 2) * k * low**2 * high ** (-1 - xi1 / 2),
        k2=2 ** (1 - xi2 / 2) * k * low ** (2 - xi2) * high ** (-1 + xi2 / 2),
        a1=1 - xi1 / 2,
        a2=1 - xi2 / 2,
        V=V,
        gradV=gradV,
        sandwich=_sandwich(Q),
    )


def boundary_certificate(params: GradFlowParams, symmetrized: bool = False) -> BoundaryCertificate:
    """W(y) = y'Qy/2 with gains proportional to the gain margin.

    Raises:
        CertificateInfeasibleError: If nu does not clear the gain threshold.
    """
    margin = _require_margin(params)
    _, high = eigen_extremes(params.q_matrix)
    xi1, xi2, n = params.xi1, params.xi2, params.dim
    Q = params.q_matrix
    G = _gradient_matrix(params, symmetrized)

    def W(x: FloatArray, y: FloatArray) -> float:  # noqa: ARG001
        return float(y @ Q @ y) / 2

    def gradW_x(x: FloatArray, y: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.zeros(n)

    def gradW_y(x: FloatArray, y: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.asarray(G @ y)

    return BoundaryCertificate(
        kappa1=2 ** (1 - xi1 / 2) * high ** (-1 + xi1 / 2) * margin,
        kappa2=2 ** (1 - xi2 / 2) * high ** (-1 + xi2 / 2) * margin,
        b1=1 - xi1 / 2,
        b2=1 - xi2 / 2,
        W=W,
        gradW_x=gradW_x,
        gradW_y=gradW_y,
        sandwich=_sandwich(Q),
    )


def n_constants(params: GradFlowParams) -> tuple[float, float]:
    """(N1, N2) scaling the Upsilon bounds in the interconnection estimates."""
    _, high = eigen_extremes(params.q_matrix)
    n1 = 2**params.xi1 * high ** (2 - params.xi1) * params.k
    n2 = float(upsilon2_delta(params.xi2)) * high ** (2 - params.xi2) * params.k
    return n1, n2


def eta(params: GradFlowParams, mu: float) -> float:
    """min(mu r1/N1, mu r2/N2), the admissibility threshold for 1/alpha_lower(q)."""
    low, _ = eigen_extremes(params.q_matrix)
    r1, r2, _ = tilde_lower_constants(low, params.xi1, params.xi2)
    n1, n2 = n_constants(params)
    return min(mu * r1 / n1, mu * r2 / n2)


def mu_star(params: GradFlowParams, mu: float) -> float:
    """mu + k max(lambda_max^(2-xi1)/r1, lambda_max^(2-xi2)/r2), the fast quadratic coefficient of I2."""
    low, high = eigen_extremes(params.q_matrix)
    r1, r2, _ = tilde_lower_constants(low, params.xi1, params.xi2)
    return mu + params.k * max(high ** (2 - params.xi1) / r1, high ** (2 - params.xi2) / r2)


def choose_q(mu: float, eta: float, alpha_lower: Callable[[float], float | FloatArray]) -> float:
    """Smallest q = 1.05^j (integer j) with 1/alpha_lower(q) < eta.

    Raises:
        InvalidParameterError: If eta is not positive or no grid point qualifies.
    """
    if not eta > 0:
        raise InvalidParameterError(f"eta must be positive, got {eta}")

    def admissible(j: int) -> bool:
        return 1.0 / float(alpha_lower(Q_GRID_RATIO**j)) < eta

    j = 0
    if admissible(j):
        while j > -Q_GRID_LIMIT and admissible(j - 1):
            j -= 1
    else:
        while not admissible(j):
            j += 1
            if j > Q_GRID_LIMIT:
                raise InvalidParameterError(f"no admissible q up to {Q_GRID_RATIO}^{Q_GRID_LIMIT}")
    q = Q_GRID_RATIO**j
    logger.debug("Chose q", extra={"extra_data": {"mu": mu, "eta": eta, "q": q}})
    return float(q)


def default_alpha(params: GradFlowParams) -> AlphaMaps:
    """Splitting maps for (1, 1 - xi1) and (1, 1 - xi2), combined pointwise."""
    return combine_pairs([alpha_pair(1.0, 1 - params.xi1), alpha_pair(1.0, 1 - params.xi2)])


def interconnection_bounds(
    params: GradFlowParams,
    mu: float,
    q: float,
    alpha: AlphaMaps | None = None,
    eta_value: float | None = None,
) -> InterconnectionBounds:
    """delta1 = c1 = delta2 = mu, c2 = mu*, chi1 = chi2 = alpha_upper(q) mu/eta.

    Args:
        params: Benchmark parameters
        mu: Slack in (0, k_lower/2)
        q: Splitting parameter
        alpha: Splitting maps; the combined default maps when omitted
        eta_value: Use this eta instead of the exact one, e.g. a quoted rounding

    Raises:
        PreconditionError: If mu is outside (0, k_lower/2).
        InadmissibleQError: If 1/alpha_lower(q) >= eta.
    """
    k_lower = reduced_certificate(params).k_lower
    if not 0 < mu < k_lower / 2:
        raise PreconditionError(f"mu must lie in (0, {k_lower / 2:.6g}), got {mu}")
    maps = alpha if alpha is not None else default_alpha(params)
    threshold = eta(params, mu) if eta_value is None else eta_value

    if not 1.0 / float(maps.lower(q)) < threshold:
        minimal = choose_q(mu, threshold, maps.lower)
        logger.error("Inadmissible q", extra={"extra_data": {"q": q, "eta": threshold, "minimal_q": minimal}})
        raise InadmissibleQError(f"q = {q:.6g} gives 1/alpha_lower(q) >= eta = {threshold:.6g}", minimal_q=minimal)

    chi = float(maps.upper(q)) * mu / threshold
    return InterconnectionBounds(chi1=chi, delta1=mu, c1=mu, chi2=chi, delta2=mu, c2=mu_star(params, mu))


def interconnection_terms(params: GradFlowParams, x: ArrayLike, y: ArrayLike) -> tuple[float, float]:
    """I1 = k Y(Qx, Qy) and I2 = -k Y(Qy, Qx) + k(|Qy|^(2-xi1) + |Qy|^(2-xi2)), Y = Upsilon_1 + Upsilon_2."""
    Q = params.q_matrix
    qx = Q @ np.asarray(x, dtype=np.float64)
    qy = Q @ np.asarray(y, dtype=np.float64)
    k, xi1, xi2 = params.k, params.xi1, params.xi2
    norm_qy = float(np.linalg.norm(qy))
    i1 = k * float(upsilon_total(xi1, xi2, qx, qy))
    i2 = -k * float(upsilon_total(xi1, xi2, qy, qx)) + k * (norm_qy ** (2 - xi1) + norm_qy ** (2 - xi2))
    return i1, i2


def build_benchmark(
    params: GradFlowParams | None = None,
    mu: float = REFERENCE_MU,
    q: float | None = None,
    alpha: AlphaMaps | None = None,
    symmetrized: bool = False,
) -> Benchmark:
    """Bundle model, certificates and interconnection bounds; q defaults to choose_q."""
    p = params or default_params()
    maps = alpha if alpha is not None else default_alpha(p)
    if q is None:
        q = choose_q(mu, eta(p, mu), maps.lower)
    return Benchmark(
        model=build_system(p),
        reduced=reduced_certificate(p, symmetrized=symmetrized),
        boundary=boundary_certificate(p, symmetrized=symmetrized),
        bounds=interconnection_bounds(p, mu, q, alpha=maps),
    )


def reproduce(samples: int = 2000, seed: int = DEFAULT_SEED) -> ReproductionReport:
    """Recompute the reference constants, the P matrix and eps_star with oracle checks.

    P and eps_star use the published maps (2q, q), q = 3000, theta = 2/3, the
    quoted eta = 0.0002 and kappa_lower = 0.27. The exact-eta variant is
    reported beside them.
    """
    params = default_params()
    Q = params.q_matrix
    low, high = eigen_extremes(Q)
    rc = reduced_certificate(params)
    bc = boundary_certificate(params)
    r1, r2, r3 = tilde_lower_constants(low, params.xi1, params.xi2)
    n1, n2 = n_constants(params)
    eta_exact = eta(params, REFERENCE_MU)
    published = published_alpha_pair()

    quoted = interconnection_bounds(params, REFERENCE_MU, REFERENCE_Q_CONSTANT, published, eta_value=QUOTED_ETA)
    exact = interconnection_bounds(params, REFERENCE_MU, REFERENCE_Q_CONSTANT, published)
    p11, p12, coefficient, offset = p_entries(rc.k_lower, REFERENCE_KAPPA_LOWER, quoted, REFERENCE_THETA)
    eps_quoted = epsilon_star(rc.k_lower, REFERENCE_KAPPA_LOWER, quoted, REFERENCE_THETA)
    eps_exact = epsilon_star(rc.k_lower, REFERENCE_KAPPA_LOWER, exact, REFERENCE_THETA)

    def det_at(eps: float) -> float:
        return float(np.linalg.det(build_P(rc.k_lower, REFERENCE_KAPPA_LOWER, quoted, REFERENCE_THETA, eps)))

    entries = {
        "lambda_min_Q": ReproductionEntry.compare(low, 4 - math.sqrt(7)),
        "lambda_max_Q": ReproductionEntry.compare(high, 4 + math.sqrt(7)),
        "sigma_max_QA": ReproductionEntry.compare(sigma_max(Q @ params.a_matrix)),
        "gain_threshold": ReproductionEntry.compare(sigma_max(Q @ params.a_matrix) / low),
        "k1": ReproductionEntry.compare(rc.k1, 0.359),
        "k2": ReproductionEntry.compare(rc.k2, 0.453),
        "k_lower": ReproductionEntry.compare(rc.k_lower, 0.359),
        "kappa_lower_default_gains": ReproductionEntry.compare(bc.kappa_lower, REFERENCE_KAPPA_LOWER),
        "r1": ReproductionEntry.compare(r1, 0.7225),
        "r2": ReproductionEntry.compare(r2, 0.5944),
        "r3": ReproductionEntry.compare(r3),
        "N1": ReproductionEntry.compare(n1, 29.60),
        "N2": ReproductionEntry.compare(n2, 312.2),
        "eta": ReproductionEntry.compare(eta_exact, QUOTED_ETA),
        "mu_star": ReproductionEntry.compare(mu_star(params, REFERENCE_MU), 262.6),
        "chi": ReproductionEntry.compare(exact.chi1, 1.5e6),
        "chi_quoted_eta": ReproductionEntry.compare(quoted.chi1, 1.5e6),
        "P11": ReproductionEntry.compare(p11, 0.02),
        "P12": ReproductionEntry.compare(p12, -750000.0),
        "P22_coefficient": ReproductionEntry.compare(coefficient, 0.09 / 2),
        "P22_offset": ReproductionEntry.compare(offset, 87.0),
        "eps_star": ReproductionEntry.compare(eps_quoted, 1e-15),
        "eps_star_exact_eta": ReproductionEntry.compare(eps_exact, 1e-15),
        "det_P_at_1e-15": ReproductionEntry.compare(det_at(1e-15)),
        "det_P_at_2.5e-15": ReproductionEntry.compare(det_at(2.5e-15)),
        "lambda_min_P_at_eps_star_half": ReproductionEntry.compare(
            lambda_min_2x2(build_P(rc.k_lower, REFERENCE_KAPPA_LOWER, quoted, REFERENCE_THETA, eps_quoted / 2))
        ),
    }

    inputs = CertificateInputs(
        k1=rc.k1,
        k2=rc.k2,
        a1=rc.a1,
        a2=rc.a2,
        kappa1=REFERENCE_KAPPA_LOWER,
        kappa2=REFERENCE_KAPPA_LOWER,
        b1=bc.b1,
        b2=bc.b2,
        **quoted.model_dump(),
    )
    certificate = assemble_certificate(inputs, theta=REFERENCE_THETA)

    rng = np.random.default_rng(seed)
    xs, ys = sample_states(params.dim, params.dim, samples, rng)
    model = build_system(params)
    rc_sym = reduced_certificate(params, symmetrized=True)
    bc_sym = boundary_certificate(params, symmetrized=True)
    i1_report, i2_report = check_interconnection(
        lambda x, y: interconnection_terms(params, x, y), rc, bc, exact, xs, ys
    )
    derived = build_benchmark(params, alpha=published, q=REFERENCE_Q_CONSTANT)
    derived_certificate = derived.certify()
    checks = {
        "reduced_decrease": check_reduced_decrease(model, rc, xs),
        "reduced_decrease_symmetrized": check_reduced_decrease(model, rc_sym, xs),
        "boundary_decrease": check_boundary_decrease(model, bc, xs, ys),
        "boundary_decrease_symmetrized": check_boundary_decrease(model, bc_sym, xs, ys),
        "interconnection_I1": i1_report,
        "interconnection_I2": i2_report,
        "composite_decrease": check_decrease(
            model, rc, bc, derived_certificate, derived_certificate.eps, xs, ys
        ),
    }

    symmetric_low = float(np.linalg.eigvalsh((Q + Q.T) / 2)[0])
    notes = [
        "A = -I, B = I and nu = 6 are default gains; the reference never states them.",
        "kappa_lower = 0.27 is taken from the quoted P22 entry rather than recomputed.",
        f"Q is not symmetric; its symmetric part has smallest eigenvalue {symmetric_low:.6g} "
        f"below lambda_min(Q) = {low:.6g}, so quadratic-form bounds built from lambda_min(Q) can fail.",
        "P and eps_star use the quoted eta = 0.0002; the exact eta drives chi and eps_star_exact_eta.",
        "The published maps alpha_lower(q) = 2q, alpha_upper(q) = q are used throughout.",
    ]
    logger.info(
        "Reproduced gradient-flow constants",
        extra={"extra_data": {"k_lower": rc.k_lower, "eta": eta_exact, "eps_star": eps_quoted}},
    )
    return ReproductionReport(
        benchmark="gradflow",
        entries=entries,
        certificate=certificate.to_record(inputs),
        checks=checks,
        notes=notes,
    )
