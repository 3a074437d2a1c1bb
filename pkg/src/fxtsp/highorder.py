"""Second-order system with fixed-time parasitic dynamics.

    x1' = -[x1]^xi1 - x1^3 + z
    x2' = -[z]^xi1 - z^3 - x1
    eps z' = -[z - x2]^xi2 - (z - x2)^3

where [v]^p = |v|^p sign(v). The slow manifold is z = x2.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from fxtsp.certify import (
    Benchmark,
    BoundaryCertificate,
    PowerLawCertificate,
    QuadraticSandwich,
    check_boundary_decrease,
    check_decrease,
    check_interconnection,
    check_reduced_decrease,
    oracle_report,
    sample_states,
)
from fxtsp.exceptions import InadmissibleQError
from fxtsp.gradflow import choose_q
from fxtsp.inequalities import AlphaMaps, alpha_pair, combine_pairs
from fxtsp.logging import get_logger
from fxtsp.models import (
    DEFAULT_SEED,
    HighOrderParams,
    IntegratorConfig,
    InterconnectionBounds,
    LemmaReport,
    ReproductionEntry,
    ReproductionReport,
)
from fxtsp.powers import FloatArray, signed_power
from fxtsp.simulate import integrate, monitor_lyapunov
from fxtsp.system import SystemModel

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

logger = get_logger(__name__)

REFERENCE_EPS = 1e-3
REFERENCE_X0 = (356.0, 241.0)
REFERENCE_Z0 = (191.0,)


def build_system(params: HighOrderParams) -> SystemModel:
    """Closed-form model with h(x) = x2."""
    xi1, xi2 = params.xi1, params.xi2

    def f(x: FloatArray, z: FloatArray) -> FloatArray:
        x1 = x[0]
        zs = z[0]
        return np.array(
            [
                -float(signed_power(x1, xi1)) - x1**3 + zs,
                -float(signed_power(zs, xi1)) - zs**3 - x1,
            ]
        )

    def g(x: FloatArray, z: FloatArray) -> FloatArray:
        e = z[0] - x[1]
        return np.array([-float(signed_power(e, xi2)) - e**3])

    def h(x: FloatArray) -> FloatArray:
        return np.array([x[1]], dtype=np.float64)

    def dh(x: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.array([[0.0, 1.0]])

    return SystemModel(slow_dim=2, fast_dim=1, f=f, g=g, h=h, dh=dh, name="highorder")


def certificates(params: HighOrderParams) -> tuple[PowerLawCertificate, BoundaryCertificate]:
    """V = |x|^2/2 and W = y^2/2 with their closed-form decay constants."""
    b1 = (params.xi2 + 1) / 2
    sandwich = QuadraticSandwich(lower=0.5, upper=0.5)

    def V(x: FloatArray) -> float:
        return float(x @ x) / 2

    def gradV(x: FloatArray) -> FloatArray:
        return np.asarray(x, dtype=np.float64)

    def W(x: FloatArray, y: FloatArray) -> float:  # noqa: ARG001
        return float(y @ y) / 2

    def gradW_x(x: FloatArray, y: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.zeros(2)

    def gradW_y(x: FloatArray, y: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.asarray(y, dtype=np.float64)

    reduced = PowerLawCertificate(
        k1=1.0, k2=1.0, a1=(params.xi1 + 1) / 2, a2=2.0, V=V, gradV=gradV, sandwich=sandwich
    )
    boundary = BoundaryCertificate(
        kappa1=2.0**b1,
        kappa2=4.0,
        b1=b1,
        b2=2.0,
        W=W,
        gradW_x=gradW_x,
        gradW_y=gradW_y,
        sandwich=sandwich,
    )
    return reduced, boundary


def admissibility_threshold(mu: float) -> float:
    return mu / 12


def alpha_maps(xi1: float) -> AlphaMaps:
    """Lower and upper maps covering |x2||y|^xi1 and the cubic cross terms, combined pointwise."""
    return combine_pairs([alpha_pair(1.0, xi1), alpha_pair(3.0, 1.0)])


def _select_q(params: HighOrderParams) -> float:
    maps = alpha_maps(params.xi1)
    threshold = admissibility_threshold(params.mu)
    if params.q is None:
        return choose_q(params.mu, threshold, maps.lower)
    if not 1.0 / float(maps.lower(params.q)) < threshold:
        minimal = choose_q(params.mu, threshold, maps.lower)
        logger.error("Inadmissible q", extra={"extra_data": {"q": params.q, "mu": params.mu, "minimal_q": minimal}})
        raise InadmissibleQError(
            f"q = {params.q:.6g} gives 1/alpha_lower(q) >= mu/12 = {threshold:.6g}", minimal_q=minimal
        )
    return params.q


def interconnection_bounds(params: HighOrderParams) -> InterconnectionBounds:
    """chi1 = (2^((9 + xi1)/4) + 16) q, chi2 = chi1 + 12, delta1 = c1 = delta2 = mu, c2 = mu + 8.

    Raises:
        InadmissibleQError: If a given q violates 1/alpha_lower(q) < mu/12.
    """
    q = _select_q(params)
    chi1 = (2 ** ((9 + params.xi1) / 4) + 16) * q
    mu = params.mu
    return InterconnectionBounds(chi1=chi1, delta1=mu, c1=mu, chi2=chi1 + 12, delta2=mu, c2=mu + 8)


def interconnection_terms(params: HighOrderParams, x: ArrayLike, y: ArrayLike) -> tuple[float, float]:
    """Closed-form I1 and I2 at (x, y)."""
    x1, x2 = (float(v) for v in np.asarray(x, dtype=np.float64))
    yv = float(np.asarray(y, dtype=np.float64)[0])
    z = yv + x2
    sp_z = float(signed_power(z, params.xi1))
    sp_x2 = float(signed_power(x2, params.xi1))
    i1 = yv * x1 - x2 * sp_z - x2 * z**3 + x2**4 + x2 * sp_x2
    i2 = yv * sp_z + yv * z**3 + yv * x1
    return i1, i2


def i1_chain_bound(params: HighOrderParams, x: ArrayLike, y: ArrayLike) -> float:
    """|y||x1| + 2|x2||y|^xi1 + |y|^3|x2| + 3|y||x2|^3, an upper bound on I1."""
    x1, x2 = (abs(float(v)) for v in np.asarray(x, dtype=np.float64))
    yv = abs(float(np.asarray(y, dtype=np.float64)[0]))
    return yv * x1 + 2 * x2 * yv**params.xi1 + yv**3 * x2 + 3 * yv * x2**3


def chain_checks(
    params: HighOrderParams, xs: FloatArray, ys: FloatArray, slack: float = 1e-9
) -> dict[str, LemmaReport]:
    """Pointwise oracles for the I1 chain bound and |y||x1| <= 4 W~ V~."""
    rc, bc = certificates(params)
    chain_gaps, chain_scales, cross_gaps, cross_scales = [], [], [], []
    for x, y in zip(xs, ys, strict=True):
        i1, _ = interconnection_terms(params, x, y)
        bound = i1_chain_bound(params, x, y)
        chain_gaps.append(bound - i1)
        chain_scales.append(abs(bound) + abs(i1))

        cross = abs(float(y[0])) * abs(float(x[0]))
        dominating = 4 * bc.tilde(x, y) * rc.tilde(x)
        cross_gaps.append(dominating - cross)
        cross_scales.append(cross + dominating)

    witness = [{"x": x.tolist(), "y": y.tolist()} for x, y in zip(xs, ys, strict=True)]
    return {
        "i1_chain": oracle_report(np.array(chain_gaps), np.array(chain_scales), slack, witness),
        "cross_term": oracle_report(np.array(cross_gaps), np.array(cross_scales), slack, witness),
    }


def build_benchmark(params: HighOrderParams | None = None) -> Benchmark:
    p = params or HighOrderParams()
    reduced, boundary = certificates(p)
    return Benchmark(model=build_system(p), reduced=reduced, boundary=boundary, bounds=interconnection_bounds(p))


def reproduce(
    cfg: IntegratorConfig | None = None, samples: int = 2000, seed: int = DEFAULT_SEED
) -> ReproductionReport:
    """Certify the reference parameters and simulate from x0 = (356, 241), z0 = 191 at eps = 0.001.

    The report carries the certificate chain, the settle time into the
    1e-6 ball, step statistics, the assumption and interconnection oracles
    and the monotonicity verdict for Psi along the trajectory.

    Raises:
        IntegrationError: If the reference simulation fails.
    """
    params = HighOrderParams()
    bench = build_benchmark(params)
    certificate = bench.certify()
    rc, bc = bench.reduced, bench.boundary
    inputs = bench.inputs()

    traj = integrate(
        bench.model,
        REFERENCE_EPS,
        REFERENCE_X0,
        REFERENCE_Z0,
        cfg,
        certificates=(rc, bc),
        theta=certificate.theta,
    )
    monitor = monitor_lyapunov(
        bench.model,
        rc,
        bc,
        certificate.theta,
        certificate.gamma1,
        certificate.gamma2,
        certificate.lambda_min,
        traj,
        REFERENCE_EPS,
    )

    rng = np.random.default_rng(seed)
    xs, ys = sample_states(2, 1, samples, rng)
    i1_report, i2_report = check_interconnection(
        lambda x, y: interconnection_terms(params, x, y), rc, bc, bench.bounds, xs, ys
    )
    checks = {
        "reduced_decrease": check_reduced_decrease(bench.model, rc, xs),
        "boundary_decrease": check_boundary_decrease(bench.model, bc, xs, ys),
        "interconnection_I1": i1_report,
        "interconnection_I2": i2_report,
        **chain_checks(params, xs, ys),
        "composite_decrease": check_decrease(bench.model, rc, bc, certificate, certificate.eps, xs, ys),
    }

    q = _select_q(params)
    entries = {
        "a1": ReproductionEntry.compare(rc.a1, (params.xi1 + 1) / 2),
        "b1": ReproductionEntry.compare(bc.b1, (params.xi2 + 1) / 2),
        "kappa1": ReproductionEntry.compare(bc.kappa1, 2 ** ((params.xi2 + 1) / 2)),
        "q": ReproductionEntry.compare(q),
        "chi1": ReproductionEntry.compare(bench.bounds.chi1, (2 ** ((9 + params.xi1) / 4) + 16) * q),
        "chi2": ReproductionEntry.compare(bench.bounds.chi2),
        "c2": ReproductionEntry.compare(bench.bounds.c2),
        "theta": ReproductionEntry.compare(certificate.theta),
        "eps_star": ReproductionEntry.compare(certificate.eps_star),
        "gamma1": ReproductionEntry.compare(certificate.gamma1),
        "gamma2": ReproductionEntry.compare(certificate.gamma2),
        "settling_bound": ReproductionEntry.compare(certificate.settling_bound),
        "settle_time": ReproductionEntry.compare(math.nan if traj.settle_time is None else traj.settle_time),
        "final_norm": ReproductionEntry.compare(traj.final_norm),
        "nfev": ReproductionEntry.compare(float(traj.nfev)),
        "step_rejections": ReproductionEntry.compare(float(traj.step_rejections)),
    }
    notes = [
        "chi2 and c2 are assembled from the stated pieces 12 W~V~ and 8 W~^2; the I1/I2 oracles validate them.",
        "The simulation runs at eps = 0.001, far above eps_star, so Psi is only checked for monotonicity "
        f"after a transient window of {monitor.transient_window:.3g}.",
    ]
    if traj.settle_time is None:
        notes.append("The reference trajectory did not settle within the horizon.")
    logger.info(
        "Reproduced high-order benchmark",
        extra={
            "extra_data": {
                "eps_star": certificate.eps_star,
                "settle_time": traj.settle_time,
                "monitor_violations": monitor.violations,
            }
        },
    )
    return ReproductionReport(
        benchmark="highorder",
        entries=entries,
        certificate=certificate.to_record(inputs),
        checks=checks,
        monitor=monitor,
        notes=notes,
    )
