"""Computable gaps for the auxiliary inequalities behind the certificates.

Every ``*_gap`` function is oriented so that a nonnegative result means the
inequality holds. The gaps are vectorized over leading batch axes and return
a Python float for scalar input. ``run_suite`` stress-tests all of them on
seeded random samples.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, TypeAlias

import numpy as np
from numpy.typing import ArrayLike

from fxtsp.exceptions import InvalidParameterError, PreconditionError, ShapeError
from fxtsp.logging import get_logger
from fxtsp.models import InequalityReport, LemmaReport
from fxtsp.powers import UNDERFLOW, FloatArray, as_result, nonneg_power, signed_power

__all__ = [
    "LEMMA_NAMES",
    "AlphaMaps",
    "AlphaPair",
    "alpha_pair",
    "combine_pairs",
    "karamata_gap",
    "majorizes",
    "middle_power_gap",
    "published_alpha_pair",
    "run_suite",
    "signed_difference_gap",
    "signed_power",
    "split_product_doubled_gap",
    "split_product_gap",
    "tilde_lower_constants",
    "tilde_lower_gaps",
    "upsilon",
    "upsilon1_bound_gap",
    "upsilon2_bound_gap",
    "upsilon2_delta",
    "upsilon_total",
    "weighted_amgm_gap",
]

logger = get_logger(__name__)

Sides: TypeAlias = tuple[FloatArray, FloatArray]
Batch: TypeAlias = dict[str, FloatArray]
KMap: TypeAlias = Callable[[ArrayLike], "float | FloatArray"]

GAP_SLACK = 1e-9
MAJORIZATION_TOL = 1e-12
VECTOR_WIDTH = 8


def _gap(sides: Sides) -> float | FloatArray:
    lhs, rhs = sides
    return as_result(rhs - lhs)


# Majorization and Karamata


def _check_nonincreasing(seq: FloatArray, label: str) -> None:
    if seq.ndim != 1:
        raise ShapeError(f"{label} must be one-dimensional, got shape {seq.shape}")
    if np.any(np.diff(seq) > 0):
        raise InvalidParameterError(f"{label} must be sorted nonincreasing, got {seq.tolist()}")


def majorizes(a: ArrayLike, b: ArrayLike) -> bool:
    """True when every prefix sum of a dominates b's and the totals agree.

    Raises:
        ShapeError: If the lengths differ.
        InvalidParameterError: If either sequence is not sorted nonincreasing.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    _check_nonincreasing(av, "a")
    _check_nonincreasing(bv, "b")
    if av.shape != bv.shape:
        raise ShapeError(f"sequences must have equal length, got {av.size} and {bv.size}")

    prefix_a, prefix_b = np.cumsum(av), np.cumsum(bv)
    scale = max(float(np.max(np.abs(prefix_a), initial=0.0)), float(np.max(np.abs(prefix_b), initial=0.0)))
    tol = MAJORIZATION_TOL * scale
    return bool(np.all(prefix_a >= prefix_b - tol) and abs(prefix_a[-1] - prefix_b[-1]) <= tol)


def _karamata_sides(exponent: FloatArray, a: FloatArray, b: FloatArray) -> Sides:
    p = exponent[..., np.newaxis]
    sum_a = np.sum(nonneg_power(a, p), axis=-1)
    sum_b = np.sum(nonneg_power(b, p), axis=-1)
    convex = exponent >= 1
    return np.where(convex, sum_b, sum_a), np.where(convex, sum_a, sum_b)


def karamata_gap(exponent: float, a: ArrayLike, b: ArrayLike) -> float:
    """Karamata's inequality for f(t) = t**exponent, oriented by convexity.

    Returns sum f(a) - sum f(b) for exponent >= 1 and the reverse for
    exponent in (0, 1].

    Raises:
        PreconditionError: If a does not majorize b or the exponent is not positive.
    """
    if not exponent > 0:
        raise PreconditionError(f"exponent must be positive, got {exponent}")
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if np.any(av < 0) or np.any(bv < 0):
        raise PreconditionError("Karamata gaps are defined for nonnegative sequences")
    if not majorizes(av, bv):
        raise PreconditionError(f"{av.tolist()} does not majorize {bv.tolist()}")
    return float(_gap(_karamata_sides(np.asarray(float(exponent)), av, bv)))


# Power sandwich and weighted AM-GM


def _middle_power_sides(x: FloatArray, a: FloatArray, a_low: FloatArray, a_high: FloatArray) -> Sides:
    return nonneg_power(x, a), nonneg_power(x, a_low) + nonneg_power(x, a_high)


def middle_power_gap(x: ArrayLike, a: ArrayLike, a_low: ArrayLike, a_high: ArrayLike) -> float | FloatArray:
    """x**a_low + x**a_high - x**a, strictly positive for x > 0 and a_low < a < a_high.

    Raises:
        PreconditionError: If x is not positive or the exponents are misordered.
    """
    xv, av, lo, hi = (np.asarray(v, dtype=np.float64) for v in (x, a, a_low, a_high))
    if np.any(xv <= 0):
        raise PreconditionError("middle_power_gap needs x > 0")
    if np.any(lo >= av) or np.any(av >= hi):
        raise PreconditionError("exponents must satisfy a_low < a < a_high")
    return _gap(_middle_power_sides(xv, av, lo, hi))


def _amgm_sides(w: FloatArray, x: FloatArray) -> Sides:
    total = np.sum(w, axis=-1)
    mean = np.sum(w * x, axis=-1) / total
    positive = x > 0
    log_x = np.log(np.where(positive, x, 1.0))
    has_zero = np.any(~positive & (w > 0), axis=-1)
    geometric = np.where(has_zero, 0.0, np.exp(np.sum(w * log_x, axis=-1) / total))
    return geometric, mean


def weighted_amgm_gap(w: ArrayLike, x: ArrayLike) -> float | FloatArray:
    """Weighted arithmetic mean minus weighted geometric mean along the last axis.

    Raises:
        ShapeError: If w and x differ in shape.
        PreconditionError: If a weight is not positive or a value is negative.
    """
    wv = np.asarray(w, dtype=np.float64)
    xv = np.asarray(x, dtype=np.float64)
    if wv.shape != xv.shape:
        raise ShapeError(f"weights and values must match, got {wv.shape} and {xv.shape}")
    if np.any(wv <= 0):
        raise PreconditionError("weights must be positive")
    if np.any(xv < 0):
        raise PreconditionError("values must be nonnegative")
    return _gap(_amgm_sides(wv, xv))


# The Upsilon interconnection terms


def _upsilon(xi: ArrayLike, x: FloatArray, y: FloatArray) -> FloatArray:
    xi_arr = np.asarray(xi, dtype=np.float64)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    s = np.linalg.norm(x + y, axis=-1)
    dot = np.sum(x * y, axis=-1)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        first = nonneg_power(nx, 2.0 - xi_arr)
        s_power = nonneg_power(s, -xi_arr)
        direct = first - np.where(s < UNDERFLOW, 0.0, (nx * nx + dot) * s_power)

        # |x + y|**2 = |x|**2 (1 + r); expm1/log1p keep small |y| accurate.
        near = (ny <= 0.5 * nx) & (nx > UNDERFLOW)
        safe_nx = np.where(near, nx, 1.0)
        r = np.where(near, (2.0 * dot + ny * ny) / (safe_nx * safe_nx), 0.0)
        series = -first * np.expm1((-xi_arr / 2.0) * np.log1p(r)) - dot * s_power
    return np.where(near, series, direct)


def _check_upsilon_exponent(index: int, xi: ArrayLike) -> None:
    xi_arr = np.asarray(xi, dtype=np.float64)
    if index == 1:
        if np.any(xi_arr <= 0) or np.any(xi_arr >= 1):
            raise PreconditionError(f"Upsilon_1 needs xi in (0, 1), got {xi}")
    elif index == 2:
        if np.any(xi_arr >= 0):
            raise PreconditionError(f"Upsilon_2 needs xi < 0, got {xi}")
    else:
        raise PreconditionError(f"index must be 1 or 2, got {index}")


def _pair(x: ArrayLike, y: ArrayLike) -> tuple[FloatArray, FloatArray]:
    xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
    yv = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if xv.shape != yv.shape:
        raise ShapeError(f"x and y must have the same shape, got {xv.shape} and {yv.shape}")
    return xv, yv


def upsilon(index: int, xi: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """x . (x/|x|**xi - (y + x)/|y + x|**xi), with zero norms mapped to zero terms.

    Raises:
        PreconditionError: If xi is outside (0, 1) for index 1 or not negative for index 2.
    """
    _check_upsilon_exponent(index, xi)
    xv, yv = _pair(x, y)
    return as_result(_upsilon(xi, xv, yv))


def upsilon_total(xi1: ArrayLike, xi2: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """Upsilon_1 + Upsilon_2."""
    _check_upsilon_exponent(1, xi1)
    _check_upsilon_exponent(2, xi2)
    xv, yv = _pair(x, y)
    return as_result(_upsilon(xi1, xv, yv) + _upsilon(xi2, xv, yv))


def upsilon2_delta(xi2: ArrayLike) -> float | FloatArray:
    """Delta(xi2) = 1 + max(1, -xi2 / 2**(xi2 + 1))."""
    xi_arr = np.asarray(xi2, dtype=np.float64)
    if np.any(xi_arr >= 0):
        raise PreconditionError(f"Delta needs xi2 < 0, got {xi2}")
    return as_result(1.0 + np.maximum(1.0, -xi_arr / np.exp2(xi_arr + 1.0)))


def _upsilon1_bound_sides(xi1: FloatArray, x: FloatArray, y: FloatArray) -> Sides:
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    return np.abs(_upsilon(xi1, x, y)), np.exp2(xi1) * nx * nonneg_power(ny, 1.0 - xi1)


def _upsilon2_bound_sides(xi2: FloatArray, x: FloatArray, y: FloatArray) -> Sides:
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    delta = 1.0 + np.maximum(1.0, -xi2 / np.exp2(xi2 + 1.0))
    with np.errstate(over="ignore"):
        rhs = delta * nx * ny * (nonneg_power(nx, -xi2) + nonneg_power(ny, -xi2))
    return np.abs(_upsilon(xi2, x, y)), rhs


def upsilon1_bound_gap(xi1: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """2**xi1 |x| |y|**(1 - xi1) - |Upsilon_1(x, y)|."""
    _check_upsilon_exponent(1, xi1)
    xv, yv = _pair(x, y)
    return _gap(_upsilon1_bound_sides(np.asarray(xi1, dtype=np.float64), xv, yv))


def upsilon2_bound_gap(xi2: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """Delta(xi2) |x| |y| (|x|**-xi2 + |y|**-xi2) - |Upsilon_2(x, y)|."""
    _check_upsilon_exponent(2, xi2)
    xv, yv = _pair(x, y)
    return _gap(_upsilon2_bound_sides(np.asarray(xi2, dtype=np.float64), xv, yv))


# Splitting mixed power products


@dataclass(frozen=True)
class AlphaMaps:
    """A pair of class-K-infinity maps (alpha_lower, alpha_upper) in q."""

    lower: KMap
    upper: KMap
    label: str = "custom"


@dataclass(frozen=True)
class AlphaPair(AlphaMaps):
    """Maps for which |x|^p1 |y|^p2 <= |x|^p/lower(q) + upper(q)|xy|^(p/2) + |y|^p/lower(q)."""

    p1: float = 1.0
    p2: float = 1.0

    @property
    def p(self) -> float:
        return self.p1 + self.p2


def _alpha_values(p1: ArrayLike, p2: ArrayLike, q: ArrayLike) -> tuple[FloatArray, FloatArray]:
    p1v, p2v, qv = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (p1, p2, q)))
    equal = p1v == p2v
    hi = np.maximum(p1v, p2v)
    lo = np.minimum(p1v, p2v)
    p = hi + lo
    spread = np.where(equal, 1.0, hi - lo)
    ratio = p / spread
    young_exponent = p / (2.0 * lo)

    with np.errstate(over="ignore", under="ignore"):
        lower = np.minimum(2.0 * qv, ratio * nonneg_power(qv, ratio))
        upper = np.maximum(qv / 4.0, (2.0 * lo / p) * nonneg_power(qv, young_exponent))
    return np.where(equal, 2.0 * qv, lower), np.where(equal, qv / 4.0, upper)


def alpha_pair(p1: float, p2: float) -> AlphaPair:
    """Build the splitting maps for exponents (p1, p2).

    Equal exponents give (2q, q/4). Otherwise the Young-inequality maps for
    the ordered exponents are combined with the equal-case maps by pointwise
    min (lower) and max (upper).

    Raises:
        InvalidParameterError: If an exponent is not positive.
    """
    if not (p1 > 0 and p2 > 0):
        raise InvalidParameterError(f"exponents must be positive, got ({p1}, {p2})")

    def lower(q: ArrayLike) -> float | FloatArray:
        return as_result(_alpha_values(p1, p2, q)[0])

    def upper(q: ArrayLike) -> float | FloatArray:
        return as_result(_alpha_values(p1, p2, q)[1])

    return AlphaPair(lower=lower, upper=upper, label=f"split({p1:g},{p2:g})", p1=p1, p2=p2)


def published_alpha_pair() -> AlphaMaps:
    """The quoted reference maps lower(q) = 2q, upper(q) = q."""

    def lower(q: ArrayLike) -> float | FloatArray:
        return as_result(2.0 * np.asarray(q, dtype=np.float64))

    def upper(q: ArrayLike) -> float | FloatArray:
        return as_result(np.asarray(q, dtype=np.float64) * 1.0)

    return AlphaMaps(lower=lower, upper=upper, label="published")


def combine_pairs(pairs: Iterable[AlphaMaps]) -> AlphaMaps:
    """Pointwise min of the lower maps and max of the upper maps."""
    members = tuple(pairs)
    if not members:
        raise InvalidParameterError("combine_pairs needs at least one pair")

    def lower(q: ArrayLike) -> float | FloatArray:
        return as_result(np.min([np.asarray(m.lower(q)) for m in members], axis=0))

    def upper(q: ArrayLike) -> float | FloatArray:
        return as_result(np.max([np.asarray(m.upper(q)) for m in members], axis=0))

    return AlphaMaps(lower=lower, upper=upper, label="+".join(m.label for m in members))


def _split_product_sides(
    p1: FloatArray, p2: FloatArray, lower: FloatArray, upper: FloatArray, x: FloatArray, y: FloatArray, doubled: bool
) -> Sides:
    ax, ay = np.abs(x), np.abs(y)
    p = p1 + p2
    with np.errstate(over="ignore", under="ignore"):
        lhs = nonneg_power(ax, p1) * nonneg_power(ay, p2)
        if doubled:
            lhs = lhs + nonneg_power(ax, p2) * nonneg_power(ay, p1)
        rhs = (nonneg_power(ax, p) + nonneg_power(ay, p)) / lower + upper * nonneg_power(ax * ay, p / 2.0)
    return lhs, (2.0 * rhs if doubled else rhs)


def _split_product(pair: AlphaPair, q: ArrayLike, x: ArrayLike, y: ArrayLike, doubled: bool) -> float | FloatArray:
    qv = np.asarray(q, dtype=np.float64)
    if np.any(qv <= 0):
        raise InvalidParameterError(f"q must be positive, got {q}")
    lower = np.asarray(pair.lower(qv), dtype=np.float64)
    upper = np.asarray(pair.upper(qv), dtype=np.float64)
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    p1 = np.asarray(pair.p1)
    p2 = np.asarray(pair.p2)
    return _gap(_split_product_sides(p1, p2, lower, upper, xv, yv, doubled))


def split_product_gap(pair: AlphaPair, q: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """Single-term form: right side minus |x|^p1 |y|^p2."""
    return _split_product(pair, q, x, y, doubled=False)


def split_product_doubled_gap(pair: AlphaPair, q: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """Two-term form |x|^p1|y|^p2 + |x|^p2|y|^p1 against twice the right side."""
    return _split_product(pair, q, x, y, doubled=True)


# Lower bounds on the tilde functions of quadratic certificates


def tilde_lower_constants(lambda_min: float, xi1: float, xi2: float) -> tuple[float, float, float]:
    """Return (r1, r2, r3) for quadratic V = x'Qx/2 with smallest eigenvalue lambda_min."""
    if not lambda_min > 0:
        raise PreconditionError(f"lambda_min must be positive, got {lambda_min}")
    r1 = 2.0 ** (xi1 / 2 - 1) * lambda_min ** (1 - xi1 / 2)
    r2 = 2.0 ** (xi2 / 2 - 1) * lambda_min ** (1 - xi2 / 2)
    r3 = 2.0 ** ((xi1 + xi2) / 4) * lambda_min ** (1 - (xi1 + xi2) / 4)
    return r1, r2, r3


def _tilde_lower_sides(
    lam: FloatArray, xi1: FloatArray, xi2: FloatArray, v: FloatArray, w: FloatArray, nx: FloatArray, ny: FloatArray
) -> tuple[Sides, Sides, Sides]:
    r1 = np.exp2(xi1 / 2 - 1) * nonneg_power(lam, 1 - xi1 / 2)
    r2 = np.exp2(xi2 / 2 - 1) * nonneg_power(lam, 1 - xi2 / 2)
    r3 = np.exp2((xi1 + xi2) / 4) * nonneg_power(lam, 1 - (xi1 + xi2) / 4)
    a1, a2 = 1 - xi1 / 2, 1 - xi2 / 2
    mid = 1 - (xi1 + xi2) / 4

    with np.errstate(over="ignore", under="ignore"):
        v_tilde = nonneg_power(v, a1 / 2) + nonneg_power(v, a2 / 2)
        w_tilde = nonneg_power(w, a1 / 2) + nonneg_power(w, a2 / 2)

        def squared_bound(n: FloatArray) -> FloatArray:
            return r1 * nonneg_power(n, 2 * a1) + r2 * nonneg_power(n, 2 * a2) + r3 * nonneg_power(n, 2 * mid)

        cross = (
            r1 * nonneg_power(nx * ny, a1)
            + r2 * nonneg_power(nx * ny, a2)
            + r3 / 2 * (nonneg_power(nx, a1) * nonneg_power(ny, a2) + nonneg_power(nx, a2) * nonneg_power(ny, a1))
        )
        return (
            (squared_bound(nx), v_tilde * v_tilde),
            (squared_bound(ny), w_tilde * w_tilde),
            (cross, v_tilde * w_tilde),
        )


def tilde_lower_gaps(
    Q_lambda_min: float,
    xi1: float,
    xi2: float,
    x: ArrayLike,
    y: ArrayLike,
    Q: ArrayLike | None = None,
) -> tuple[float | FloatArray, float | FloatArray, float | FloatArray]:
    """Gaps for V~(x)^2, W~(y)^2 and V~(x)W~(y) against their r1, r2, r3 lower bounds.

    Args:
        Q_lambda_min: Smallest eigenvalue of Q entering r1, r2, r3
        xi1: Exponent in (0, 1)
        xi2: Negative exponent
        x: Slow state, shape (..., N)
        y: Fast offset, shape (..., N)
        Q: Quadratic-form matrix; defaults to Q_lambda_min * I, where all three
            bounds hold with equality

    Raises:
        PreconditionError: If the exponents or lambda are out of range.
    """
    if not 0 < xi1 < 1 or not xi2 < 0:
        raise PreconditionError(f"need xi1 in (0, 1) and xi2 < 0, got ({xi1}, {xi2})")
    if not Q_lambda_min > 0:
        raise PreconditionError(f"Q_lambda_min must be positive, got {Q_lambda_min}")
    xv, yv = _pair(x, y)
    if Q is None:
        v = Q_lambda_min * np.sum(xv * xv, axis=-1) / 2
        w = Q_lambda_min * np.sum(yv * yv, axis=-1) / 2
    else:
        qm = np.asarray(Q, dtype=np.float64)
        v = np.einsum("...i,ij,...j->...", xv, qm, xv) / 2
        w = np.einsum("...i,ij,...j->...", yv, qm, yv) / 2
    sides = _tilde_lower_sides(
        np.asarray(Q_lambda_min),
        np.asarray(xi1),
        np.asarray(xi2),
        v,
        w,
        np.linalg.norm(xv, axis=-1),
        np.linalg.norm(yv, axis=-1),
    )
    vv, ww, vw = (_gap(s) for s in sides)
    return vv, ww, vw


# Signed-power difference


def _signed_difference_sides(xi: FloatArray, x: FloatArray, y: FloatArray) -> Sides:
    lhs = x * (signed_power(x, xi) - signed_power(y + x, xi))
    return lhs, 2.0 * np.abs(x) * nonneg_power(np.abs(y), xi)


def signed_difference_gap(xi: ArrayLike, x: ArrayLike, y: ArrayLike) -> float | FloatArray:
    """2|x||y|**xi - x(sig(x)**xi - sig(y + x)**xi)."""
    xi_arr = np.asarray(xi, dtype=np.float64)
    if np.any(xi_arr <= 0) or np.any(xi_arr >= 1):
        raise PreconditionError(f"signed_difference_gap needs xi in (0, 1), got {xi}")
    return _gap(_signed_difference_sides(xi_arr, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))


# Randomized oracle suite


def _magnitudes(
    rng: np.random.Generator, shape: int | tuple[int, ...], low: float = 1e-6, high: float = 1e6
) -> FloatArray:
    return np.asarray(10.0 ** rng.uniform(math.log10(low), math.log10(high), size=shape))


def _signs(rng: np.random.Generator, n: int) -> FloatArray:
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


def _vectors(rng: np.random.Generator, n: int) -> tuple[FloatArray, FloatArray]:
    """Random vectors of width VECTOR_WIDTH; entries past each row's dimension are zero."""
    dims = rng.integers(1, VECTOR_WIDTH + 1, size=n)
    mask = np.arange(VECTOR_WIDTH) < dims[:, np.newaxis]
    directions = rng.standard_normal((n, VECTOR_WIDTH)) * mask
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    directions /= np.where(norms > 0, norms, 1.0)
    return directions * _magnitudes(rng, (n, 1)), dims.astype(np.float64)


def _vector_pairs(rng: np.random.Generator, n: int) -> Batch:
    x, dims = _vectors(rng, n)
    mask = np.arange(VECTOR_WIDTH) < dims[:, np.newaxis]
    y = rng.standard_normal((n, VECTOR_WIDTH)) * mask
    y /= np.maximum(np.linalg.norm(y, axis=1, keepdims=True), UNDERFLOW)
    y *= _magnitudes(rng, (n, 1))

    # A quarter of the samples put y on the line through x, where several bounds are tight.
    collinear = rng.random(n) < 0.25
    ratio = (_signs(rng, n) * 10.0 ** rng.uniform(-2.0, 2.0, size=n))[:, np.newaxis]
    y = np.where(collinear[:, np.newaxis], ratio * x, y)
    return {"x": x, "y": y, "dim": dims}


def _sample_karamata(rng: np.random.Generator, n: int) -> Batch:
    lengths = rng.integers(2, VECTOR_WIDTH + 1, size=n)
    mask = np.arange(VECTOR_WIDTH) < lengths[:, np.newaxis]
    b = -np.sort(-(_magnitudes(rng, (n, VECTOR_WIDTH)) * mask), axis=1)
    a = b.copy()
    rows = np.arange(n)
    for _ in range(3):
        # Moving mass from a poorer entry to a richer one preserves majorization.
        j = rng.integers(1, lengths)
        i = rng.integers(0, j)
        amount = rng.random(n) * a[rows, j]
        a[rows, i] += amount
        a[rows, j] -= amount
        a = -np.sort(-a, axis=1)

    # The pair (V + W, 0) against (max, min) from the composite argument.
    split = rng.random(n) < 0.25
    v, w = _magnitudes(rng, n), _magnitudes(rng, n)
    two_a = np.zeros((n, VECTOR_WIDTH))
    two_b = np.zeros((n, VECTOR_WIDTH))
    two_a[:, 0] = v + w
    two_b[:, 0], two_b[:, 1] = np.maximum(v, w), np.minimum(v, w)
    a = np.where(split[:, np.newaxis], two_a, a)
    b = np.where(split[:, np.newaxis], two_b, b)
    lengths = np.where(split, 2, lengths)
    return {"exponent": rng.uniform(0.05, 4.0, size=n), "a": a, "b": b, "dim": lengths.astype(np.float64)}


def _sample_middle_power(rng: np.random.Generator, n: int) -> Batch:
    exponents = np.sort(rng.uniform(-3.0, 3.0, size=(n, 3)), axis=1)
    return {"x": _magnitudes(rng, n), "a_low": exponents[:, 0], "a": exponents[:, 1], "a_high": exponents[:, 2]}


def _sample_amgm(rng: np.random.Generator, n: int) -> Batch:
    dims = rng.integers(1, VECTOR_WIDTH + 1, size=n)
    mask = np.arange(VECTOR_WIDTH) < dims[:, np.newaxis]
    w = rng.uniform(0.01, 10.0, size=(n, VECTOR_WIDTH)) * mask
    x = _magnitudes(rng, (n, VECTOR_WIDTH)) * mask
    x = np.where(rng.random((n, VECTOR_WIDTH)) < 0.05, 0.0, x)
    equal = rng.random(n) < 0.1
    x = np.where(equal[:, np.newaxis], _magnitudes(rng, (n, 1)) * mask, x)
    return {"w": w, "x": x, "dim": dims.astype(np.float64)}


def _sample_upsilon1(rng: np.random.Generator, n: int) -> Batch:
    return {"xi": rng.uniform(0.01, 0.99, size=n), **_vector_pairs(rng, n)}


def _sample_upsilon2(rng: np.random.Generator, n: int) -> Batch:
    return {"xi": rng.uniform(-2.0, -0.01, size=n), **_vector_pairs(rng, n)}


def _sample_split_product(rng: np.random.Generator, n: int) -> Batch:
    p1 = rng.uniform(0.1, 3.0, size=n)
    offset = rng.uniform(0.1, 2.9, size=n) * _signs(rng, n)
    p2 = np.clip(p1 + offset, 0.1, 3.0)
    p2 = np.where(np.abs(p2 - p1) < 0.1, np.where(p1 > 1.5, p1 - 0.1, p1 + 0.1), p2)
    p2 = np.where(rng.random(n) < 0.2, p1, p2)
    q = _magnitudes(rng, n, low=1e-2, high=1e2)
    return {
        "p1": p1,
        "p2": p2,
        "q": q,
        "x": _signs(rng, n) * _magnitudes(rng, n),
        "y": _signs(rng, n) * _magnitudes(rng, n),
    }


def _sample_tilde(rng: np.random.Generator, n: int) -> Batch:
    pairs = _vector_pairs(rng, n)
    mask = np.arange(VECTOR_WIDTH) < pairs["dim"][:, np.newaxis]
    # Q = lambda I + B B' with B zero for half the rows, the equality case.
    factor = rng.standard_normal((n, VECTOR_WIDTH, 2)) * mask[:, :, np.newaxis]
    factor *= (rng.random(n) < 0.5)[:, np.newaxis, np.newaxis] * _magnitudes(rng, (n, 1, 1), low=1e-2, high=1e1)
    return {
        "lambda_min": _magnitudes(rng, n, low=1e-2, high=1e2),
        "xi1": rng.uniform(0.01, 0.99, size=n),
        "xi2": rng.uniform(-2.0, -0.01, size=n),
        "B": factor,
        **pairs,
    }


def _sample_signed_difference(rng: np.random.Generator, n: int) -> Batch:
    x = _signs(rng, n) * _magnitudes(rng, n)
    y = _signs(rng, n) * _magnitudes(rng, n)
    # y = -n x with n in (1, 3) flips the sign of y + x.
    flip = rng.random(n) < 0.25
    y = np.where(flip, -rng.uniform(1.0, 3.0, size=n) * x, y)
    return {"xi": rng.uniform(0.01, 0.99, size=n), "x": x, "y": y}


def _tilde_batch_sides(batch: Batch) -> tuple[Sides, Sides, Sides]:
    lam = batch["lambda_min"]
    x, y, factor = batch["x"], batch["y"], batch["B"]
    bx = np.einsum("nij,ni->nj", factor, x)
    by = np.einsum("nij,ni->nj", factor, y)
    v = (lam * np.sum(x * x, axis=1) + np.sum(bx * bx, axis=1)) / 2
    w = (lam * np.sum(y * y, axis=1) + np.sum(by * by, axis=1)) / 2
    return _tilde_lower_sides(
        lam, batch["xi1"], batch["xi2"], v, w, np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)
    )


def _split_product_batch_sides(batch: Batch, doubled: bool) -> Sides:
    lower, upper = _alpha_values(batch["p1"], batch["p2"], batch["q"])
    return _split_product_sides(batch["p1"], batch["p2"], lower, upper, batch["x"], batch["y"], doubled)


@dataclass(frozen=True)
class _Oracle:
    sample: Callable[[np.random.Generator, int], Batch]
    sides: Callable[[Batch], Sides]


_ORACLES: dict[str, _Oracle] = {
    "karamata": _Oracle(_sample_karamata, lambda b: _karamata_sides(b["exponent"], b["a"], b["b"])),
    "middle_power": _Oracle(
        _sample_middle_power, lambda b: _middle_power_sides(b["x"], b["a"], b["a_low"], b["a_high"])
    ),
    "weighted_amgm": _Oracle(_sample_amgm, lambda b: _amgm_sides(b["w"], b["x"])),
    "upsilon1_bound": _Oracle(_sample_upsilon1, lambda b: _upsilon1_bound_sides(b["xi"], b["x"], b["y"])),
    "upsilon2_bound": _Oracle(_sample_upsilon2, lambda b: _upsilon2_bound_sides(b["xi"], b["x"], b["y"])),
    "split_product": _Oracle(_sample_split_product, lambda b: _split_product_batch_sides(b, doubled=False)),
    "split_product_doubled": _Oracle(_sample_split_product, lambda b: _split_product_batch_sides(b, doubled=True)),
    "tilde_lower_vv": _Oracle(_sample_tilde, lambda b: _tilde_batch_sides(b)[0]),
    "tilde_lower_ww": _Oracle(_sample_tilde, lambda b: _tilde_batch_sides(b)[1]),
    "tilde_lower_vw": _Oracle(_sample_tilde, lambda b: _tilde_batch_sides(b)[2]),
    "signed_difference": _Oracle(
        _sample_signed_difference, lambda b: _signed_difference_sides(b["xi"], b["x"], b["y"])
    ),
}

LEMMA_NAMES: tuple[str, ...] = tuple(_ORACLES)


@dataclass
class _ShardResult:
    samples: int
    violations: int
    worst_gap: float
    witness: dict[str, Any] | None
    tightness: float | None


def _witness(batch: Batch, index: int) -> dict[str, Any]:
    width = int(batch["dim"][index]) if "dim" in batch else None
    out: dict[str, Any] = {}
    for key, values in batch.items():
        if key == "dim":
            continue
        value = values[index]
        if np.ndim(value) == 0:
            out[key] = float(value)
        else:
            out[key] = (value[:width] if width is not None else value).tolist()
    return out


def _run_shard(oracle: _Oracle, seed: np.random.SeedSequence, samples: int) -> _ShardResult:
    rng = np.random.default_rng(seed)
    batch = oracle.sample(rng, samples)
    lhs, rhs = oracle.sides(batch)
    gap = rhs - lhs
    scale = np.abs(lhs) + np.abs(rhs)

    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(scale > 0, gap / np.where(scale > 0, scale, 1.0), 0.0)
        ratio = np.where(rhs > 0, gap / np.where(rhs > 0, rhs, 1.0), np.inf)
    normalized = np.where(np.isfinite(normalized), normalized, -np.inf)
    violations = int(np.count_nonzero(~(gap >= -GAP_SLACK * scale)))
    worst = int(np.argmin(normalized))
    tightness = float(np.min(ratio)) if np.any(np.isfinite(ratio)) else None
    return _ShardResult(
        samples=samples,
        violations=violations,
        worst_gap=float(normalized[worst]),
        witness=_witness(batch, worst),
        tightness=tightness,
    )


def _merge(results: Sequence[_ShardResult]) -> LemmaReport:
    worst = min(results, key=lambda r: r.worst_gap)
    tight = [r.tightness for r in results if r.tightness is not None]
    return LemmaReport(
        samples=sum(r.samples for r in results),
        violations=sum(r.violations for r in results),
        worst_gap=worst.worst_gap,
        witness=worst.witness,
        tightness=min(tight) if tight else None,
    )


def run_suite(
    samples: int,
    seed: int,
    lemmas: Sequence[str] | None = None,
    shards: int = 1,
    workers: int = 1,
) -> InequalityReport:
    """Run the randomized oracles and collect a per-lemma report.

    Each lemma draws from its own substream of ``SeedSequence(seed)``, split
    further per shard, so selecting a subset of lemmas or changing the worker
    count leaves every lemma's samples unchanged.

    Args:
        samples: Samples per lemma
        seed: Root seed
        lemmas: Names from LEMMA_NAMES; all when omitted
        shards: Number of independent substreams per lemma
        workers: Threads used to evaluate shards

    Raises:
        InvalidParameterError: If a lemma name is unknown or a count is not positive.
    """
    if samples < 1 or shards < 1 or workers < 1:
        raise InvalidParameterError("samples, shards and workers must be positive")
    selected = list(LEMMA_NAMES if lemmas is None else lemmas)
    unknown = sorted(set(selected) - set(LEMMA_NAMES))
    if unknown:
        raise InvalidParameterError(f"unknown lemmas: {', '.join(unknown)}")

    streams = dict(zip(LEMMA_NAMES, np.random.SeedSequence(seed).spawn(len(LEMMA_NAMES)), strict=True))
    sizes = [len(part) for part in np.array_split(np.arange(samples), shards) if len(part)]

    reports: dict[str, LemmaReport] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for name in selected:
            oracle = _ORACLES[name]
            shard_seeds = streams[name].spawn(len(sizes))
            results = list(executor.map(partial(_run_shard, oracle), shard_seeds, sizes))
            reports[name] = _merge(results)
            logger.info(
                "Inequality oracle finished",
                extra={
                    "extra_data": {
                        "lemma": name,
                        "samples": reports[name].samples,
                        "violations": reports[name].violations,
                        "worst_gap": reports[name].worst_gap,
                    }
                },
            )

    total = sum(r.violations for r in reports.values())
    if total:
        logger.warning("Inequality oracles found violations", extra={"extra_data": {"violations": total}})
    return InequalityReport(seed=seed, samples=samples, shards=shards, violations=total, lemmas=reports)
