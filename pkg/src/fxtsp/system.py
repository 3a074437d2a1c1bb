"""Singularly perturbed systems in original, shifted, reduced and boundary-layer coordinates.

A model is the pair

    x' = f(x, z),    eps * z' = g(x, z)

with a quasi-steady-state map h solving g(x, h(x)) = 0. With y = z - h(x)
the fast state is measured from the slow manifold.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, TypeAlias

import numpy as np

from fxtsp.exceptions import InvalidParameterError, PreconditionError, ShapeError
from fxtsp.logging import get_logger
from fxtsp.powers import FloatArray

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

logger = get_logger(__name__)

VectorField: TypeAlias = Callable[[FloatArray, FloatArray], FloatArray]
StateMap: TypeAlias = Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class ComparisonBound:
    """Linear class-K bound zeta(r) = gain * r on |h(x)|."""

    name: str = "identity"
    gain: float = 1.0

    def __call__(self, r: float) -> float:
        return self.gain * r


@dataclass(frozen=True)
class SystemModel:
    """Slow/fast vector fields with the quasi-steady-state map and its Jacobian."""

    slow_dim: int
    fast_dim: int
    f: VectorField
    g: VectorField
    h: StateMap
    dh: StateMap
    comparison_bound: ComparisonBound = field(default_factory=ComparisonBound)
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.slow_dim < 1 or self.fast_dim < 1:
            raise InvalidParameterError(
                f"dimensions must be positive, got slow_dim={self.slow_dim}, fast_dim={self.fast_dim}"
            )


def _vector(value: ArrayLike, dim: int, label: str) -> FloatArray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (dim,):
        raise ShapeError(f"{label} must have shape ({dim},), got {arr.shape}")
    return arr


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")


def full_field(model: SystemModel, eps: float, x: ArrayLike, z: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Return (f(x, z), g(x, z)/eps).

    Raises:
        InvalidParameterError: If eps is not positive.
        ShapeError: If x or z do not match the model dimensions.
    """
    _check_eps(eps)
    xv = _vector(x, model.slow_dim, "x")
    zv = _vector(z, model.fast_dim, "z")
    return model.f(xv, zv), model.g(xv, zv) / eps


def reduced_field(model: SystemModel, x: ArrayLike) -> FloatArray:
    """Slow dynamics on the manifold, f(x, h(x))."""
    xv = _vector(x, model.slow_dim, "x")
    return model.f(xv, model.h(xv))


def boundary_layer_field(model: SystemModel, x: ArrayLike, y: ArrayLike) -> FloatArray:
    """Fast dynamics in stretched time with x frozen, g(x, y + h(x))."""
    xv = _vector(x, model.slow_dim, "x")
    yv = _vector(y, model.fast_dim, "y")
    return model.g(xv, yv + model.h(xv))


def shifted_field(model: SystemModel, eps: float, x: ArrayLike, y: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Return (x', y') in shifted coordinates.

    y' = g(x, y + h(x))/eps - dh(x) f(x, y + h(x)).
    """
    _check_eps(eps)
    xv = _vector(x, model.slow_dim, "x")
    yv = _vector(y, model.fast_dim, "y")
    z = yv + model.h(xv)
    slow = model.f(xv, z)
    fast = model.g(xv, z) / eps - model.dh(xv) @ slow
    return slow, fast


def to_shifted(model: SystemModel, x: ArrayLike, z: ArrayLike) -> FloatArray:
    """Map a fast state z to its offset y = z - h(x) from the slow manifold."""
    xv = _vector(x, model.slow_dim, "x")
    zv = _vector(z, model.fast_dim, "z")
    return zv - model.h(xv)


def boundary_layer_system(model: SystemModel) -> SystemModel:
    """Stretched-time fast subsystem as a model of its own.

    The slow state is frozen (f = 0) and the fast state is the offset y,
    so h = 0 and integrating with eps = 1 runs the boundary layer in tau time.
    """
    n, m = model.slow_dim, model.fast_dim

    def f(x: FloatArray, z: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.zeros(n)

    def g(x: FloatArray, z: FloatArray) -> FloatArray:
        return model.g(x, z + model.h(x))

    def h(x: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.zeros(m)

    def dh(x: FloatArray) -> FloatArray:  # noqa: ARG001
        return np.zeros((m, n))

    return SystemModel(
        slow_dim=n,
        fast_dim=m,
        f=f,
        g=g,
        h=h,
        dh=dh,
        comparison_bound=ComparisonBound(name="zero", gain=0.0),
        name=f"{model.name}-boundary-layer",
    )


def check_model(model: SystemModel, samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> None:
    """Spot-check the equilibrium, root and comparison-bound invariants.

    Slow states are drawn with log-uniform norms in [1e-6, 1e6].

    Raises:
        PreconditionError: On the first sample that breaks an invariant.
    """
    zero_x, zero_z = np.zeros(model.slow_dim), np.zeros(model.fast_dim)
    if np.linalg.norm(model.f(zero_x, zero_z)) > 0 or np.linalg.norm(model.g(zero_x, zero_z)) > 0:
        raise PreconditionError(f"origin is not an equilibrium of model {model.name!r}")

    rng = np.random.default_rng(seed)
    for _ in range(samples):
        direction = rng.standard_normal(model.slow_dim)
        x = direction / np.linalg.norm(direction) * 10.0 ** rng.uniform(-6.0, 6.0)
        norm_x = float(np.linalg.norm(x))
        hx = model.h(x)
        residual = float(np.linalg.norm(model.g(x, hx)))
        if residual > tol * (1.0 + norm_x**3):
            logger.error(
                "Root property failed",
                extra={"extra_data": {"model": model.name, "x": x, "residual": residual}},
            )
            raise PreconditionError(f"g(x, h(x)) = {residual:.3e} at x = {x.tolist()}")
        bound = model.comparison_bound(norm_x)
        if float(np.linalg.norm(hx)) > bound * (1.0 + 1e-12) + tol:
            raise PreconditionError(f"|h(x)| exceeds {model.comparison_bound.name} bound at x = {x.tolist()}")
