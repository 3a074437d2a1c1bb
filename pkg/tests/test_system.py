"""Tests for power primitives and the singularly perturbed model core."""

import numpy as np
import pytest

from fxtsp.exceptions import InvalidParameterError, PreconditionError, ShapeError
from fxtsp.highorder import build_system
from fxtsp.models import HighOrderParams
from fxtsp.powers import nonneg_power, power_term, signed_power
from fxtsp.system import (
    SystemModel,
    boundary_layer_field,
    boundary_layer_system,
    check_model,
    full_field,
    reduced_field,
    shifted_field,
    to_shifted,
)


def _linear_model() -> SystemModel:
    """x' = -x + z, z' = (x - z)/eps with h(x) = x."""
    return SystemModel(
        slow_dim=1,
        fast_dim=1,
        f=lambda x, z: -x + z,
        g=lambda x, z: x - z,
        h=lambda x: np.array(x, dtype=np.float64),
        dh=lambda x: np.eye(1),  # noqa: ARG005
        name="linear",
    )


class TestPowers:
    """Tests for the guarded power helpers."""

    def test_signed_power_is_odd(self) -> None:
        """Test that signed_power keeps the sign of its argument."""
        assert signed_power(-8.0, 1 / 3) == pytest.approx(-2.0)
        assert signed_power(8.0, 1 / 3) == pytest.approx(2.0)
        assert signed_power(0.0, 0.25) == 0.0

    def test_signed_power_rejects_nonpositive_exponent(self) -> None:
        """Test that a nonpositive exponent raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="must be positive"):
            signed_power(1.0, 0.0)

    def test_nonneg_power_maps_zero_to_zero(self) -> None:
        """Test that a zero base gives zero."""
        assert nonneg_power(0.0, 0.5) == 0.0
        assert nonneg_power(4.0, 0.5) == pytest.approx(2.0)

    def test_power_term_scales_by_norm(self) -> None:
        """Test that v/|v|^xi has norm |v|^(1 - xi) and the direction of v."""
        v = np.array([3.0, 4.0])
        out = power_term(v, 0.5)
        assert np.linalg.norm(out) == pytest.approx(5.0**0.5)
        assert out / np.linalg.norm(out) == pytest.approx(v / 5.0)

    def test_power_term_zero_vector(self) -> None:
        """Test that the zero vector maps to zero for negative xi."""
        assert np.all(power_term(np.zeros(3), -2 / 3) == 0.0)


class TestFields:
    """Tests for the coordinate views of a model."""

    def test_full_field_divides_fast_part_by_eps(self) -> None:
        """Test that the fast component is g/eps."""
        model = _linear_model()
        slow, fast = full_field(model, 0.5, [1.0], [0.0])
        assert slow == pytest.approx([-1.0])
        assert fast == pytest.approx([2.0])

    def test_full_field_rejects_nonpositive_eps(self) -> None:
        """Test that eps <= 0 raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="eps must be positive"):
            full_field(_linear_model(), 0.0, [1.0], [0.0])

    def test_shape_mismatch_raises(self) -> None:
        """Test that wrongly sized states raise ShapeError."""
        with pytest.raises(ShapeError, match="shape"):
            reduced_field(_linear_model(), [1.0, 2.0])

    def test_highorder_full_field_at_unit_slow_state(self) -> None:
        """Test the second-order field at eps = 0.5, x = (1, 0), z = 0."""
        model = build_system(HighOrderParams(xi1=1 / 3, xi2=1 / 4))
        slow, fast = full_field(model, 0.5, [1.0, 0.0], [0.0])
        assert slow == pytest.approx([-2.0, -1.0])
        assert fast == pytest.approx([0.0])

    def test_highorder_reduced_field(self) -> None:
        """Test the reduced dynamics at x = (0, 1) and x = (1, 1)."""
        model = build_system(HighOrderParams())
        assert reduced_field(model, [0.0, 1.0]) == pytest.approx([1.0, -2.0])
        assert reduced_field(model, [1.0, 1.0]) == pytest.approx([-1.0, -3.0])

    def test_highorder_boundary_layer_field(self) -> None:
        """Test that the boundary layer is -[y]^xi2 - y^3 for any frozen x."""
        model = build_system(HighOrderParams(xi2=1 / 4))
        assert boundary_layer_field(model, [5.0, -3.0], [1.0]) == pytest.approx([-2.0])

    def test_shifted_field_subtracts_manifold_drift(self) -> None:
        """Test that y' = g/eps - dh f, which for dh = [0 1] subtracts x2'."""
        model = build_system(HighOrderParams())
        eps, x, y = 0.2, np.array([0.7, -0.4]), np.array([0.3])
        slow, fast = shifted_field(model, eps, x, y)
        expected = boundary_layer_field(model, x, y)[0] / eps - slow[1]
        assert fast == pytest.approx([expected])

    def test_to_shifted(self) -> None:
        """Test that y = z - h(x)."""
        model = build_system(HighOrderParams())
        assert to_shifted(model, [2.0, 3.0], [5.0]) == pytest.approx([2.0])


class TestBoundaryLayerSystem:
    """Tests for the stretched-time subsystem."""

    def test_freezes_slow_state(self) -> None:
        """Test that the slow field vanishes and the fast field matches the boundary layer."""
        model = build_system(HighOrderParams())
        layer = boundary_layer_system(model)
        x, y = np.array([1.5, -0.5]), np.array([0.8])
        assert np.all(layer.f(x, y) == 0.0)
        assert layer.g(x, y) == pytest.approx(boundary_layer_field(model, x, y))
        assert layer.name == "highorder-boundary-layer"


class TestCheckModel:
    """Tests for the model invariant spot-check."""

    def test_highorder_model_passes(self) -> None:
        """Test that the second-order model satisfies the root and bound invariants."""
        check_model(build_system(HighOrderParams()), samples=200)

    def test_wrong_manifold_is_reported(self) -> None:
        """Test that h not solving g(x, h(x)) = 0 raises PreconditionError."""
        model = SystemModel(
            slow_dim=1,
            fast_dim=1,
            f=lambda x, z: -x + z,
            g=lambda x, z: x - z,
            h=lambda x: 2.0 * x,
            dh=lambda x: 2.0 * np.eye(1),  # noqa: ARG005
        )
        with pytest.raises(PreconditionError, match="g\\(x, h\\(x\\)\\)"):
            check_model(model, samples=10)

    def test_invalid_dimensions(self) -> None:
        """Test that zero dimensions raise InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="dimensions must be positive"):
            SystemModel(slow_dim=0, fast_dim=1, f=np.add, g=np.add, h=np.negative, dh=np.negative)
