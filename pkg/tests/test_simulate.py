"""Tests for trajectory integration, settle detection, sweeps and monitoring."""

import math
from typing import Any
from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError

from fxtsp.certify import Benchmark
from fxtsp.exceptions import (
    CertificateInfeasibleError,
    DivergenceError,
    InvalidParameterError,
    PreconditionError,
    ShapeError,
    StiffnessError,
)
from fxtsp.models import IntegratorConfig
from fxtsp.powers import signed_power
from fxtsp.simulate import (
    SweepRow,
    SweepTable,
    Trajectory,
    boundary_layer_sweep,
    integrate,
    monitor_lyapunov,
    monitor_states,
    qss_residual,
    settling_time,
    sweep,
)
from fxtsp.system import SystemModel


def _decay_model() -> SystemModel:
    """x' = -x, eps z' = -z with h = 0."""
    return SystemModel(
        slow_dim=1,
        fast_dim=1,
        f=lambda x, z: -x,  # noqa: ARG005
        g=lambda x, z: -z,  # noqa: ARG005
        h=lambda x: np.zeros(1),  # noqa: ARG005
        dh=lambda x: np.zeros((1, 1)),  # noqa: ARG005
        name="decay",
    )


def _fixed_time_model() -> SystemModel:
    """Decoupled scalar fixed-time flows v' = -[v]^(1/2) - v^3 in both components."""

    def flow(v: np.ndarray) -> np.ndarray:
        return -signed_power(v, 0.5) - v**3

    return SystemModel(
        slow_dim=1,
        fast_dim=1,
        f=lambda x, z: flow(x),  # noqa: ARG005
        g=lambda x, z: flow(z),  # noqa: ARG005
        h=lambda x: np.zeros(1),  # noqa: ARG005
        dh=lambda x: np.zeros((1, 1)),  # noqa: ARG005
        name="fixed-time",
    )


def _trajectory(times: list[float], states: list[list[float]], slow_dim: int = 1) -> Trajectory:
    states_arr = np.asarray(states, dtype=np.float64)
    return Trajectory(
        times=np.asarray(times, dtype=np.float64),
        states=states_arr,
        diagnostics=np.full((len(times), 3), np.nan),
        settle_time=None,
        slow_dim=slow_dim,
        fast_dim=states_arr.shape[1] - slow_dim,
    )


class _ScriptedSolver:
    """Stand-in stepper that jumps to a fixed state or reports failure."""

    n_stages = 6

    def __init__(self, fun: Any, t0: float, y0: np.ndarray, t_bound: float, **kwargs: Any) -> None:  # noqa: ARG002
        self.t = t0
        self.y = y0
        self.status = "running"
        self.nfev = 0

    def step(self) -> str | None:
        raise NotImplementedError


class _NanSolver(_ScriptedSolver):
    def step(self) -> str | None:
        self.t += 0.1
        self.y = np.full_like(self.y, np.nan)
        return None


class _FailingSolver(_ScriptedSolver):
    def step(self) -> str | None:
        self.status = "failed"
        return "Required step size is less than spacing between numbers."


class TestIntegrate:
    """Tests for the stepped integrator."""

    def test_zero_initial_state_settles_immediately(self, fast_integrator: IntegratorConfig) -> None:
        """Test that the equilibrium is clamped and settles at t = 0."""
        traj = integrate(_decay_model(), 0.1, [0.0], [0.0], fast_integrator)
        assert traj.settle_time == 0.0
        assert traj.times[-1] == pytest.approx(fast_integrator.dwell)
        assert traj.final_norm == 0.0

    def test_linear_decay_accuracy(self) -> None:
        """Test that x' = -x stays within 10 rel_tol of e^-t over [0, 10]."""
        cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-12, t_max=10.0, settle_radius=1e-30)
        traj = integrate(_decay_model(), 1.0, [1.0], [2.0], cfg)
        assert traj.times[-1] == pytest.approx(10.0)
        exact = np.exp(-traj.times)
        assert np.max(np.abs(traj.xs[:, 0] - exact)) <= 10 * cfg.rel_tol
        assert np.max(np.abs(traj.zs[:, 0] - 2 * exact)) <= 10 * cfg.rel_tol * 2
        assert traj.settle_time is None
        assert traj.method == "RK45"
        assert traj.nfev > 0

    @pytest.mark.parametrize("method", ["RK45", "DOP853"])
    def test_solvers_agree(self, method: str) -> None:
        """Test that every stepper reproduces the decay to 1e-5."""
        cfg = IntegratorConfig(method=method, t_max=2.0, dwell=1.0, settle_radius=1e-30)
        traj = integrate(_decay_model(), 0.5, [1.0], [1.0], cfg)
        assert traj.xs[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-5)
        assert traj.method == method

    def test_implicit_methods_rejected(self) -> None:
        """Test that only explicit Runge-Kutta steppers are accepted."""
        with pytest.raises(ValidationError, match="RK45"):
            IntegratorConfig(method="LSODA")  # type: ignore[arg-type]

    def test_rejections_counted(self) -> None:
        """Test that an oversized first step under a tight tolerance is rejected and counted."""
        cfg = IntegratorConfig(
            rel_tol=1e-12, abs_tol=1e-14, dt_init=0.5, dt_max_per_eps=1.0, t_max=1.0, settle_radius=1e-30
        )
        traj = integrate(_decay_model(), 1.0, [1.0], [1.0], cfg)
        accepted = len(traj) - 1
        assert traj.step_rejections >= 1
        assert traj.nfev == 1 + 6 * (accepted + traj.step_rejections)

    def test_manifold_offset_locked(self, highorder_benchmark: Benchmark) -> None:
        """Test that the fast state is held on z = x2 and the run settles in a bounded number of steps."""
        cfg = IntegratorConfig(t_max=20.0, max_steps=20_000)
        traj = integrate(highorder_benchmark.model, 0.01, [2.0, -1.0], [1.5], cfg)
        assert traj.settle_time is not None
        assert traj.final_norm <= cfg.settle_radius
        after_layer = traj.times >= 1.0
        assert np.max(qss_residual(traj, highorder_benchmark.model)[after_layer]) <= cfg.lock_radius

    def test_stiff_fixed_time_coordinate_locked(self) -> None:
        """Test that v' = -[v]^(1/2) - v^3 is locked at zero instead of chattering around it."""
        cfg = IntegratorConfig(t_max=10.0, dwell=0.5, max_steps=5_000)
        traj = integrate(_fixed_time_model(), 1.0, [0.5], [0.0], cfg)
        assert traj.settle_time is not None
        assert traj.settle_time < 2.5
        assert traj.final_norm == 0.0

    def test_linear_coordinate_not_locked(self) -> None:
        """Test that a coordinate whose rate fits the step cap is integrated through the lock radius."""
        cfg = IntegratorConfig(t_max=1.0, settle_radius=1e-30)
        traj = integrate(_decay_model(), 1.0, [5e-5], [0.0], cfg)
        assert traj.xs[-1, 0] == pytest.approx(5e-5 * math.exp(-1.0), rel=1e-5)

    def test_fixed_time_flow_settles(self, fast_integrator: IntegratorConfig) -> None:
        """Test that v' = -[v]^(1/2) - v^3 settles before its comparison bound 2.5."""
        traj = integrate(_fixed_time_model(), 1.0, [3.0], [-2.0], fast_integrator)
        assert traj.settle_time is not None
        assert traj.settle_time < 2.5
        assert traj.final_norm <= fast_integrator.settle_radius

    def test_diagnostics_with_certificates(self, highorder_benchmark: Benchmark) -> None:
        """Test that V, W and Psi are recorded per sample when certificates are given."""
        cfg = IntegratorConfig(t_max=0.05, dwell=0.01)
        rc, bc = highorder_benchmark.reduced, highorder_benchmark.boundary
        traj = integrate(highorder_benchmark.model, 0.01, [1.0, -1.0], [0.5], cfg, certificates=(rc, bc), theta=0.3)
        v, w, psi = traj.diagnostics[0]
        assert v == pytest.approx(1.0)
        assert w == pytest.approx(0.5 * 1.5**2)
        assert psi == pytest.approx(0.3 * v + 0.7 * w)
        assert np.all(np.isfinite(traj.diagnostics))

    def test_diagnostics_without_certificates(self, fast_integrator: IntegratorConfig) -> None:
        """Test that diagnostics are NaN without certificates."""
        traj = integrate(_decay_model(), 0.1, [0.0], [0.0], fast_integrator)
        assert np.all(np.isnan(traj.diagnostics))

    def test_wrong_initial_shape(self) -> None:
        """Test that a mis-sized initial state raises ShapeError."""
        with pytest.raises(ShapeError, match="initial state"):
            integrate(_decay_model(), 0.1, [1.0, 2.0], [0.0])

    def test_rejects_nonpositive_eps(self) -> None:
        """Test that eps <= 0 raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="eps must be positive"):
            integrate(_decay_model(), 0.0, [1.0], [0.0])

    def test_step_limit(self) -> None:
        """Test that exceeding max_steps raises StiffnessError."""
        cfg = IntegratorConfig(max_steps=3, t_max=20.0)
        with pytest.raises(StiffnessError, match="exceeded 3 steps") as exc_info:
            integrate(_decay_model(), 0.1, [1.0], [1.0], cfg)
        assert exc_info.value.exit_code == 3

    def test_non_finite_state(self) -> None:
        """Test that a NaN state raises DivergenceError with the last good state."""
        with (
            patch.dict("fxtsp.simulate.SOLVERS", {"RK45": _NanSolver}),
            pytest.raises(DivergenceError, match="non-finite") as exc_info,
        ):
            integrate(_decay_model(), 0.1, [1.0], [1.0])
        assert exc_info.value.state == pytest.approx([1.0, 1.0])

    def test_solver_failure(self) -> None:
        """Test that a failed step raises StiffnessError."""
        with (
            patch.dict("fxtsp.simulate.SOLVERS", {"RK45": _FailingSolver}),
            pytest.raises(StiffnessError, match="solver failed"),
        ):
            integrate(_decay_model(), 0.1, [1.0], [1.0])


class TestSettlingTime:
    """Tests for run-based settle detection on sampled trajectories."""

    def test_exponential_decay(self) -> None:
        """Test that e^-t enters radius e^-5 at t = 5."""
        times = np.linspace(0.0, 10.0, 1001)
        traj = _trajectory(times.tolist(), np.exp(-times)[:, np.newaxis].tolist())
        assert settling_time(traj, math.exp(-5.0), 1.0) == pytest.approx(5.0, abs=0.011)

    def test_reentry_restarts_the_run(self) -> None:
        """Test that leaving the ball discards the earlier run."""
        traj = _trajectory([0, 1, 2, 3, 4, 5, 6], [[1.0], [0.0], [0.0], [1.0], [0.0], [0.0], [0.0]])
        assert settling_time(traj, 0.5, 2.0) == 4.0

    def test_short_final_run(self) -> None:
        """Test that a final run shorter than the dwell does not settle."""
        traj = _trajectory([0, 1, 2], [[1.0], [1.0], [0.0]])
        assert settling_time(traj, 0.5, 1.0) is None

    def test_empty_trajectory(self) -> None:
        """Test that an empty trajectory raises InvalidParameterError."""
        traj = Trajectory(
            times=np.array([]),
            states=np.zeros((0, 2)),
            diagnostics=np.zeros((0, 3)),
            settle_time=None,
            slow_dim=1,
            fast_dim=1,
        )
        with pytest.raises(InvalidParameterError, match="empty"):
            settling_time(traj, 1.0, 1.0)

    def test_matches_integrator(self, fast_integrator: IntegratorConfig) -> None:
        """Test that post-hoc detection agrees with the integrator's settle time."""
        traj = integrate(_fixed_time_model(), 1.0, [1.0], [1.0], fast_integrator)
        assert settling_time(traj, fast_integrator.settle_radius, fast_integrator.dwell) == traj.settle_time


class TestSweep:
    """Tests for the initial-condition sweep."""

    def test_zero_magnitude_and_decay(self, fast_integrator: IntegratorConfig) -> None:
        """Test that magnitude 0 settles at once and magnitude 1 settles by ln(1e6)."""
        table = sweep(_decay_model(), 0.1, [0.0, 1.0], 2, fast_integrator, seed=4, workers=2)
        assert len(table.rows) == 4
        maxima = table.max_by_magnitude()
        assert maxima[0.0] == 0.0
        assert 0.0 < maxima[1.0] <= math.log(1e6) + 0.25
        assert all(row.error is None for row in table.rows)

    def test_deterministic_directions(self, fast_integrator: IntegratorConfig) -> None:
        """Test that the same seed gives the same table."""
        first = sweep(_decay_model(), 0.1, [1.0], 3, fast_integrator, seed=9, workers=1)
        second = sweep(_decay_model(), 0.1, [1.0], 3, fast_integrator, seed=9, workers=3)
        assert first == second

    def test_failed_cell_is_recorded(self) -> None:
        """Test that an integration error is stored in its cell."""
        cfg = IntegratorConfig(max_steps=2)
        table = sweep(_decay_model(), 0.1, [1.0], 1, cfg, workers=1)
        assert table.rows[0].settle_time is None
        assert table.rows[0].error is not None
        assert table.rows[0].error.startswith("StiffnessError")

    def test_unsorted_magnitudes(self) -> None:
        """Test that descending magnitudes raise InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="ascending"):
            sweep(_decay_model(), 0.1, [10.0, 1.0], 2)

    def test_no_directions(self) -> None:
        """Test that zero directions raise InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="directions must be positive"):
            sweep(_decay_model(), 0.1, [1.0], 0)

    def test_boundary_layer_sweep(self, highorder_benchmark: Benchmark, fast_integrator: IntegratorConfig) -> None:
        """Test that the stretched-time boundary layer settles within its comparison bound."""
        table, bound = boundary_layer_sweep(
            highorder_benchmark.model, highorder_benchmark.boundary, [1.0, 100.0], 2, fast_integrator, workers=1
        )
        assert bound == pytest.approx(1 / (2**0.625 * 0.375) + 0.25)
        assert all(value <= bound for value in table.max_by_magnitude().values())


class TestSweepTable:
    """Tests for sweep aggregation."""

    def test_max_by_magnitude(self) -> None:
        """Test per-magnitude maxima with an unsettled cell mapped to inf."""
        table = SweepTable([SweepRow(1.0, 0, 2.0), SweepRow(1.0, 1, 3.0), SweepRow(10.0, 0, None)])
        assert table.max_by_magnitude() == {1.0: 3.0, 10.0: math.inf}

    def test_saturated(self) -> None:
        """Test the saturation ratio against the reference magnitude."""
        close = SweepTable([SweepRow(1e3, 0, 4.0), SweepRow(1e6, 0, 4.5)])
        far = SweepTable([SweepRow(1e3, 0, 4.0), SweepRow(1e6, 0, 6.0)])
        unsettled = SweepTable([SweepRow(1e3, 0, 4.0), SweepRow(1e6, 0, None)])
        assert close.saturated()
        assert not far.saturated()
        assert not unsettled.saturated()

    def test_saturated_needs_reference(self) -> None:
        """Test that a missing reference magnitude raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="not part of the sweep"):
            SweepTable([SweepRow(1.0, 0, 1.0)]).saturated()


class TestMonitor:
    """Tests for the Lyapunov monitors."""

    def test_increasing_psi_flagged(self, highorder_benchmark: Benchmark) -> None:
        """Test that a trajectory moving away from the origin is reported."""
        traj = _trajectory([0.0, 1.0, 2.0], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], slow_dim=2)
        report = monitor_lyapunov(
            highorder_benchmark.model,
            highorder_benchmark.reduced,
            highorder_benchmark.boundary,
            0.5,
            0.9,
            1.5,
            1.0,
            traj,
            eps=0.01,
            transient_window=0.0,
        )
        assert report.mode == "monotone"
        assert report.checked == 2
        assert report.violations == 2
        assert report.worst_time == 2.0

    def test_transient_window_skips_samples(self, highorder_benchmark: Benchmark) -> None:
        """Test that samples inside the default 10 eps window are skipped."""
        traj = _trajectory([0.0, 0.15, 0.3], [[2.0, 0.0, 0.0], [3.0, 0.0, 0.0], [1.0, 0.0, 0.0]], slow_dim=2)
        report = monitor_lyapunov(
            highorder_benchmark.model,
            highorder_benchmark.reduced,
            highorder_benchmark.boundary,
            0.5,
            0.9,
            1.5,
            1.0,
            traj,
            eps=0.01,
        )
        assert report.transient_window == pytest.approx(0.1)
        assert report.checked == 1
        assert report.violations == 0

    def test_rate_mode_along_trajectory(self, highorder_benchmark: Benchmark) -> None:
        """Test the decrease rate along a trajectory integrated at the certified eps."""
        certificate = highorder_benchmark.certify()
        eps = certificate.eps
        rc, bc = highorder_benchmark.reduced, highorder_benchmark.boundary
        cfg = IntegratorConfig(t_max=40 * eps, dwell=10 * eps)
        traj = integrate(highorder_benchmark.model, eps, [0.5, -0.3], [-0.3], cfg)
        report = monitor_lyapunov(
            highorder_benchmark.model,
            rc,
            bc,
            certificate.theta,
            certificate.gamma1,
            certificate.gamma2,
            certificate.lambda_min,
            traj,
            eps,
            rate_mode=True,
            eps_star=certificate.eps_star,
        )
        assert report.mode == "rate"
        assert report.checked > 0
        assert report.violations == 0

    def test_rate_mode_rejects_large_eps(self, highorder_benchmark: Benchmark) -> None:
        """Test that the rate check refuses eps at or above eps_star."""
        certificate = highorder_benchmark.certify()
        traj = _trajectory([0.0, 1.0], [[1.0, 0.0, 0.0], [0.5, 0.0, 0.0]], slow_dim=2)
        with pytest.raises(CertificateInfeasibleError, match="below eps_star"):
            monitor_lyapunov(
                highorder_benchmark.model,
                highorder_benchmark.reduced,
                highorder_benchmark.boundary,
                certificate.theta,
                certificate.gamma1,
                certificate.gamma2,
                certificate.lambda_min,
                traj,
                certificate.eps_star,
                rate_mode=True,
                eps_star=certificate.eps_star,
            )

    def test_rate_mode_needs_eps_star(self, highorder_benchmark: Benchmark) -> None:
        """Test that the rate check without a threshold raises PreconditionError."""
        traj = _trajectory([0.0, 1.0], [[1.0, 0.0, 0.0], [0.5, 0.0, 0.0]], slow_dim=2)
        with pytest.raises(PreconditionError, match="eps_star"):
            monitor_lyapunov(
                highorder_benchmark.model,
                highorder_benchmark.reduced,
                highorder_benchmark.boundary,
                0.5,
                0.9,
                1.5,
                1.0,
                traj,
                eps=1e-3,
                rate_mode=True,
            )

    def test_states_at_certified_eps(self, highorder_benchmark: Benchmark) -> None:
        """Test the sampled-state rate check below eps_star."""
        certificate = highorder_benchmark.certify()
        report = monitor_states(
            highorder_benchmark.model,
            highorder_benchmark.reduced,
            highorder_benchmark.boundary,
            certificate,
            certificate.eps,
            samples=200,
            seed=2,
        )
        assert report.mode == "states"
        assert report.violations == 0

    def test_states_reject_large_eps(self, highorder_benchmark: Benchmark) -> None:
        """Test that eps >= eps_star raises CertificateInfeasibleError."""
        certificate = highorder_benchmark.certify()
        with pytest.raises(CertificateInfeasibleError, match="below eps_star"):
            monitor_states(
                highorder_benchmark.model,
                highorder_benchmark.reduced,
                highorder_benchmark.boundary,
                certificate,
                2 * certificate.eps_star,
                samples=10,
            )


class TestQssResidual:
    """Tests for the distance to the quasi-steady-state manifold."""

    def test_highorder_residual(self, highorder_benchmark: Benchmark) -> None:
        """Test |z - x2| per sample."""
        traj = _trajectory([0.0, 1.0], [[1.0, 2.0, 5.0], [0.0, -1.0, -1.0]], slow_dim=2)
        assert qss_residual(traj, highorder_benchmark.model) == pytest.approx([3.0, 0.0])
