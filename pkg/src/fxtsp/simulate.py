"""Trajectory integration, settling-time measurement, sweeps and Lyapunov monitoring.

Integration advances one of SciPy's explicit Runge-Kutta steppers one accepted
step at a time so that settle detection, coordinate locking and the exact-zero
clamp run between steps.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import DOP853, RK45, OdeSolver

from fxtsp.certify import (
    DECREASE_SLACK,
    BoundaryCertificate,
    CompositeCertificate,
    PowerLawCertificate,
    comparison_settling_bound,
    composite_lie_derivative,
    composite_value,
    decrease_margin,
    sample_states,
)
from fxtsp.config import Settings
from fxtsp.exceptions import (
    CertificateInfeasibleError,
    DivergenceError,
    IntegrationError,
    InvalidParameterError,
    PreconditionError,
    ShapeError,
    StiffnessError,
)
from fxtsp.logging import get_logger
from fxtsp.models import DEFAULT_SEED, IntegratorConfig, MonitorReport
from fxtsp.powers import FloatArray, nonneg_power
from fxtsp.system import SystemModel, boundary_layer_system, shifted_field, to_shifted

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = get_logger(__name__)

SOLVERS: dict[str, type[OdeSolver]] = {"RK45": RK45, "DOP853": DOP853}

MIN_STEP_FRACTION = 1e-15
# Consecutive steps below MIN_STEP_FRACTION * t_max tolerated before the run counts as stiff.
MAX_TINY_STEPS = 10_000
CLAMP_FRACTION = 1e-3
# Stiffness of a lock candidate is measured across this multiple of its magnitude.
LOCK_MARGIN = 2.0


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution with per-sample V, W and Psi diagnostics (NaN when not computed)."""

    times: FloatArray
    states: FloatArray
    diagnostics: FloatArray
    settle_time: float | None
    slow_dim: int
    fast_dim: int
    nfev: int = 0
    step_rejections: int = 0
    method: str = "RK45"

    @property
    def xs(self) -> FloatArray:
        return self.states[:, : self.slow_dim]

    @property
    def zs(self) -> FloatArray:
        return self.states[:, self.slow_dim :]

    @property
    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))

    def __len__(self) -> int:
        return int(self.times.size)


def _initial_state(model: SystemModel, x0: ArrayLike, z0: ArrayLike) -> FloatArray:
    x = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z0, dtype=np.float64)
    if x.shape != (model.slow_dim,) or z.shape != (model.fast_dim,):
        raise ShapeError(
            f"initial state must have shapes ({model.slow_dim},) and ({model.fast_dim},), got {x.shape} and {z.shape}"
        )
    return np.concatenate([x, z])


def _diagnostics(
    model: SystemModel,
    states: FloatArray,
    certificates: tuple[PowerLawCertificate, BoundaryCertificate] | None,
    theta: float,
) -> FloatArray:
    out = np.full((states.shape[0], 3), np.nan)
    if certificates is None:
        return out
    rc, bc = certificates
    n = model.slow_dim
    for i, state in enumerate(states):
        x, z = state[:n], state[n:]
        y = to_shifted(model, x, z)
        v, w = rc.V(x), bc.W(x, y)
        out[i] = (v, w, float(composite_value(theta, v, w)))
    return out


def _band_response(
    field: Callable[[FloatArray], FloatArray], w: FloatArray, c: int, delta: float
) -> tuple[bool, float]:
    """Whether w_c' points into [-delta, delta] at both edges, and the restoring rate across the band."""
    upper = w.copy()
    upper[c] = delta
    lower = w.copy()
    lower[c] = -delta
    up, down = float(field(upper)[c]), float(field(lower)[c])
    return up <= 0.0 <= down, (down - up) / (2 * delta)


def _update_locks(
    field: Callable[[FloatArray], FloatArray],
    w: FloatArray,
    locked: NDArray[np.bool_],
    radius: float,
    cap: float,
    floor: float,
) -> bool:
    """Release and acquire coordinate locks in place; True when the locked set changed.

    A coordinate within radius of zero is locked at exactly zero when the
    field keeps |w_c| <= radius invariant and its restoring rate at the
    current magnitude exceeds 1/cap. It stays locked while the band remains
    invariant.
    """
    changed = False
    for c in np.flatnonzero(locked):
        if not _band_response(field, w, c, radius)[0]:
            locked[c] = False
            changed = True
    for c in np.flatnonzero(~locked & (np.abs(w) <= radius)):
        if not _band_response(field, w, c, radius)[0]:
            continue
        _, rate = _band_response(field, w, c, LOCK_MARGIN * max(abs(float(w[c])), floor))
        if rate * cap >= 1.0:
            w[c] = 0.0
            locked[c] = True
            changed = True
    return changed


def integrate(
    model: SystemModel,
    eps: float,
    x0: ArrayLike,
    z0: ArrayLike,
    cfg: IntegratorConfig | None = None,
    certificates: tuple[PowerLawCertificate, BoundaryCertificate] | None = None,
    theta: float = 0.5,
) -> Trajectory:
    """Integrate x' = f(x, z), z' = g(x, z)/eps from (x0, z0).

    The stepper runs on (x, y) with y = z - h(x), steps capped at
    dt_max_per_eps * eps. Between steps, a slow coordinate or manifold offset
    that sits within lock_radius of zero, is held there by the field and is
    too stiff for the step cap is locked at zero, and the stepper restarts.
    The run stops once the state has stayed within settle_radius for dwell
    time units, at t_max, or when the state falls below abs_tol * 1e-3,
    where it is clamped to the equilibrium.

    Args:
        model: Singularly perturbed system
        eps: Time-scale parameter
        x0: Initial slow state
        z0: Initial fast state
        cfg: Step control, locking and settle detection; defaults when omitted
        certificates: (V, W) certificates for per-sample diagnostics
        theta: Weight of V in Psi

    Raises:
        StiffnessError: If the solver fails, the step size collapses or max_steps is exceeded.
        DivergenceError: If the state becomes non-finite.
    """
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    cfg = cfg or IntegratorConfig()
    state0 = _initial_state(model, x0, z0)
    n = model.slow_dim

    def field(w: FloatArray) -> FloatArray:
        return np.concatenate(shifted_field(model, eps, w[:n], w[n:]))

    def to_original(w: FloatArray) -> FloatArray:
        return np.concatenate([w[:n], w[n:] + model.h(w[:n])])

    locked = np.zeros(state0.size, dtype=bool)

    def rhs(t: float, w: FloatArray) -> FloatArray:  # noqa: ARG001
        dw = field(w)
        dw[locked] = 0.0
        return dw

    cap = cfg.dt_max_per_eps * eps
    clamp_below = cfg.abs_tol * CLAMP_FRACTION
    stepper = SOLVERS[cfg.method]

    def start(t: float, w: FloatArray, first_step: float) -> OdeSolver:
        return stepper(
            rhs,
            t,
            w,
            cfg.t_max,
            max_step=cap,
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
            first_step=min(first_step, cap, cfg.t_max - t),
        )

    log = logger.bind(model=model.name, eps=eps, method=cfg.method)
    log.debug("Integration started", extra={"extra_data": {"x0": state0[:n], "z0": state0[n:]}})

    w0 = np.concatenate([state0[:n], to_shifted(model, state0[:n], state0[n:])])
    _update_locks(field, w0, locked, cfg.lock_radius, cap, clamp_below)
    s0 = to_original(w0)
    norm0 = float(np.linalg.norm(s0))
    clamped = norm0 < clamp_below
    times: list[float] = [0.0]
    states: list[FloatArray] = [np.zeros_like(s0) if clamped else s0]
    inside_since: float | None = 0.0 if norm0 <= cfg.settle_radius else None

    solver = start(0.0, w0, cfg.dt_init)
    steps = 0
    solver_steps = 0
    nfev = 0
    rejections = 0
    restarts = 0
    tiny_steps = 0

    def retire(old: OdeSolver, accepted: int) -> None:
        nonlocal nfev, rejections
        nfev += int(old.nfev)
        # The initial evaluation is shared; every attempt costs n_stages evaluations.
        rejections += max(0, (int(old.nfev) - 1) // old.n_stages - accepted)

    while not clamped and solver.status == "running":
        if inside_since is not None and times[-1] - inside_since >= cfg.dwell:
            break
        if steps >= cfg.max_steps:
            raise StiffnessError(f"exceeded {cfg.max_steps} steps", time=times[-1], state=states[-1])

        message = solver.step()
        steps += 1
        solver_steps += 1
        t, w = float(solver.t), np.array(solver.y, dtype=np.float64)
        if solver.status == "failed":
            log.error("Solver failed", extra={"extra_data": {"t": t, "message": message}})
            raise StiffnessError(f"solver failed at t = {t:.6g}: {message}", time=t, state=states[-1])
        if not np.all(np.isfinite(w)):
            log.error("State diverged", extra={"extra_data": {"t": t}})
            raise DivergenceError(f"non-finite state at t = {t:.6g}", time=t, state=states[-1])

        dt = t - times[-1]
        if dt < MIN_STEP_FRACTION * cfg.t_max:
            tiny_steps += 1
            if tiny_steps > MAX_TINY_STEPS:
                raise StiffnessError(f"step size collapsed near t = {t:.6g}", time=t, state=to_original(w))
        else:
            tiny_steps = 0

        if solver.status == "running" and _update_locks(field, w, locked, cfg.lock_radius, cap, clamp_below):
            log.debug("Locks changed", extra={"extra_data": {"t": t, "locked": np.flatnonzero(locked)}})
            retire(solver, solver_steps)
            solver = start(t, w, dt)
            solver_steps = 0
            restarts += 1

        s = to_original(w)
        norm = float(np.linalg.norm(s))
        if norm < clamp_below:
            s = np.zeros_like(s)
            clamped = True
            norm = 0.0
        times.append(t)
        states.append(s)

        if norm <= cfg.settle_radius:
            if inside_since is None:
                inside_since = t
        else:
            inside_since = None

    retire(solver, solver_steps)

    if clamped:
        # Past the clamp the solution is the equilibrium itself.
        inside_since = times[-1] if inside_since is None else inside_since
        end = max(times[-1], inside_since + cfg.dwell)
        if end > times[-1]:
            times.append(end)
            states.append(np.zeros_like(state0))

    settle = inside_since if inside_since is not None and times[-1] - inside_since >= cfg.dwell else None
    states_arr = np.vstack(states)
    trajectory = Trajectory(
        times=np.asarray(times),
        states=states_arr,
        diagnostics=_diagnostics(model, states_arr, certificates, theta),
        settle_time=settle,
        slow_dim=model.slow_dim,
        fast_dim=model.fast_dim,
        nfev=nfev,
        step_rejections=rejections,
        method=cfg.method,
    )
    log.info(
        "Integration finished",
        extra={
            "extra_data": {
                "steps": steps,
                "samples": len(trajectory),
                "t_final": times[-1],
                "settle_time": settle,
                "nfev": nfev,
                "step_rejections": rejections,
                "restarts": restarts,
            }
        },
    )
    return trajectory


def settling_time(traj: Trajectory, radius: float, dwell: float) -> float | None:
    """First sample time t with every sampled |state(s)| <= radius for s in [t, t + dwell].

    Returns None when no run inside the ball lasts the dwell.
    """
    if len(traj) == 0:
        raise InvalidParameterError("trajectory is empty")
    inside = np.linalg.norm(traj.states, axis=1) <= radius
    times = traj.times
    outside_after = np.flatnonzero(~inside)
    starts = np.flatnonzero(inside & np.concatenate([[True], ~inside[:-1]]))
    for start in starts:
        later = outside_after[outside_after > start]
        if later.size == 0:
            if times[-1] - times[start] >= dwell:
                return float(times[start])
        elif times[later[0]] > times[start] + dwell:
            return float(times[start])
    return None


@dataclass(frozen=True)
class SweepRow:
    magnitude: float
    direction_index: int
    settle_time: float | None
    error: str | None = None


@dataclass(frozen=True)
class SweepTable:
    """Settling times per (magnitude, direction) cell."""

    rows: list[SweepRow] = field(default_factory=list)

    def max_by_magnitude(self) -> dict[float, float]:
        """Largest settling time per magnitude; inf when a cell did not settle."""
        out: dict[float, float] = {}
        for row in self.rows:
            value = math.inf if row.settle_time is None else row.settle_time
            out[row.magnitude] = max(out.get(row.magnitude, -math.inf), value)
        return out

    def saturated(self, ratio: float = 0.25, reference: float = 1e3) -> bool:
        """True when T(largest magnitude) - T(reference) <= ratio * T(reference)."""
        maxima = self.max_by_magnitude()
        if reference not in maxima:
            raise InvalidParameterError(f"magnitude {reference} is not part of the sweep")
        base = maxima[reference]
        top = maxima[max(maxima)]
        if not (math.isfinite(base) and math.isfinite(top)):
            return False
        return top - base <= ratio * base


def sweep(
    model: SystemModel,
    eps: float,
    magnitudes: Sequence[float],
    directions: int,
    cfg: IntegratorConfig | None = None,
    seed: int = DEFAULT_SEED,
    workers: int | None = None,
    fast_only: bool = False,
) -> SweepTable:
    """Integrate from magnitude * direction for every magnitude and seeded unit direction.

    Directions span the full (x, z) space, or only z with x0 = 0 when
    fast_only is set. Integration errors are recorded in the failing cell.

    Raises:
        InvalidParameterError: If magnitudes are not ascending and nonnegative.
    """
    mags = [float(m) for m in magnitudes]
    if any(m < 0 for m in mags) or any(b < a for a, b in zip(mags, mags[1:], strict=False)):
        raise InvalidParameterError(f"magnitudes must be nonnegative and ascending, got {mags}")
    if directions < 1:
        raise InvalidParameterError(f"directions must be positive, got {directions}")

    cfg = cfg or IntegratorConfig()
    n, m = model.slow_dim, model.fast_dim
    rng = np.random.default_rng(seed)
    units = rng.standard_normal((directions, m if fast_only else n + m))
    units /= np.linalg.norm(units, axis=1, keepdims=True)
    if fast_only:
        units = np.hstack([np.zeros((directions, n)), units])

    cells = [(mag, index) for mag in mags for index in range(directions)]

    def run_cell(cell: tuple[float, int]) -> SweepRow:
        mag, index = cell
        start = mag * units[index]
        try:
            traj = integrate(model, eps, start[:n], start[n:], cfg)
        except IntegrationError as e:
            logger.warning(
                "Sweep cell failed",
                extra={"extra_data": {"magnitude": mag, "direction": index, "error": str(e), "time": e.time}},
            )
            return SweepRow(mag, index, None, error=f"{type(e).__name__}: {e}")
        logger.debug(
            "Sweep cell finished",
            extra={"extra_data": {"magnitude": mag, "direction": index, "settle_time": traj.settle_time}},
        )
        return SweepRow(mag, index, traj.settle_time)

    max_workers = workers if workers is not None else Settings().threads
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        rows = list(executor.map(run_cell, cells))

    table = SweepTable(rows=rows)
    logger.info(
        "Sweep finished",
        extra={"extra_data": {"model": model.name, "cells": len(rows), "max_by_magnitude": table.max_by_magnitude()}},
    )
    return table


def boundary_layer_sweep(
    model: SystemModel,
    bc: BoundaryCertificate,
    magnitudes: Sequence[float],
    directions: int,
    cfg: IntegratorConfig | None = None,
    seed: int = DEFAULT_SEED,
    workers: int | None = None,
) -> tuple[SweepTable, float]:
    """Sweep the stretched-time boundary layer at x = 0 and return its comparison bound.

    The bound 1/(kappa1 (1 - b1)) + 1/(kappa2 (b2 - 1)) caps the time W needs
    to reach zero from any initial offset.
    """
    table = sweep(
        boundary_layer_system(model), 1.0, magnitudes, directions, cfg, seed=seed, workers=workers, fast_only=True
    )
    bound = comparison_settling_bound(bc.kappa1, bc.b1, bc.kappa2, bc.b2)
    logger.info(
        "Boundary-layer sweep finished",
        extra={"extra_data": {"model": model.name, "bound": bound, "max_by_magnitude": table.max_by_magnitude()}},
    )
    return table, bound


def monitor_lyapunov(
    model: SystemModel,
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    theta: float,
    gamma1: float,
    gamma2: float,
    lambda_min: float,
    traj: Trajectory,
    eps: float,
    rate_mode: bool = False,
    transient_window: float | None = None,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    eps_star: float | None = None,
) -> MonitorReport:
    """Check that Psi does not increase along a trajectory, and optionally its decrease rate.

    Samples before the transient window (default 10 eps) are skipped. An
    increase counts when it exceeds 10 (rel_tol Psi + abs_tol (1 + sqrt(Psi))).
    In rate mode each checked sample must also satisfy
    Psi' <= -(lambda_min/2)(Psi^gamma1 + 2^(1 - gamma2) Psi^gamma2),
    which the certificate only promises below its eps_star.

    Raises:
        PreconditionError: If rate_mode is set without eps_star.
        CertificateInfeasibleError: If rate_mode is set and eps is not below eps_star.
    """
    if rate_mode:
        if eps_star is None:
            raise PreconditionError("rate mode needs the certificate's eps_star")
        if not eps < eps_star:
            raise CertificateInfeasibleError(f"rate check needs eps below eps_star = {eps_star:.6g}")
    window = 10 * eps if transient_window is None else transient_window
    psi = _diagnostics(model, traj.states, (rc, bc), theta)[:, 2]
    n = model.slow_dim

    violations = 0
    checked = 0
    worst = 0.0
    worst_time: float | None = None
    for i in range(1, len(traj)):
        if traj.times[i - 1] < window:
            continue
        checked += 1
        previous = psi[i - 1]
        tolerance = 10 * (rel_tol * previous + abs_tol * (1 + math.sqrt(previous)))
        excess = psi[i] - previous - tolerance

        if rate_mode:
            x, z = traj.states[i, :n], traj.states[i, n:]
            y = to_shifted(model, x, z)
            actual = composite_lie_derivative(model, rc, bc, theta, eps, x, y)
            allowed = -(lambda_min / 2) * (
                float(nonneg_power(psi[i], gamma1)) + 2 ** (1 - gamma2) * float(nonneg_power(psi[i], gamma2))
            )
            rate_excess = actual - allowed - DECREASE_SLACK * max(abs(actual), abs(allowed))
            excess = max(excess, rate_excess)

        if excess > 0:
            violations += 1
            if excess > worst:
                worst, worst_time = float(excess), float(traj.times[i])

    if violations:
        logger.warning(
            "Lyapunov monitor found violations",
            extra={"extra_data": {"violations": violations, "worst": worst, "time": worst_time}},
        )
    return MonitorReport(
        mode="rate" if rate_mode else "monotone",
        samples=len(traj),
        checked=checked,
        violations=violations,
        worst_violation=worst,
        worst_time=worst_time,
        transient_window=window,
    )


def monitor_states(
    model: SystemModel,
    rc: PowerLawCertificate,
    bc: BoundaryCertificate,
    certificate: CompositeCertificate,
    eps: float,
    samples: int,
    seed: int = DEFAULT_SEED,
) -> MonitorReport:
    """Rate check of the composite decrease at sampled states, without integrating.

    Raises:
        CertificateInfeasibleError: If eps is not below the certificate's eps_star.
    """
    if not eps < certificate.eps_star:
        raise CertificateInfeasibleError(f"rate check needs eps below eps_star = {certificate.eps_star:.6g}")
    xs, ys = sample_states(model.slow_dim, model.fast_dim, samples, np.random.default_rng(seed))
    violations = 0
    worst = 0.0
    for x, y in zip(xs, ys, strict=True):
        gap, scale = decrease_margin(model, rc, bc, certificate, eps, x, y)
        if gap < -DECREASE_SLACK * scale:
            violations += 1
            worst = max(worst, -gap / scale)
    return MonitorReport(mode="states", samples=samples, checked=samples, violations=violations, worst_violation=worst)


def qss_residual(traj: Trajectory, model: SystemModel) -> FloatArray:
    """|z - h(x)| per sample."""
    return np.array([float(np.linalg.norm(to_shifted(model, x, z))) for x, z in zip(traj.xs, traj.zs, strict=True)])
