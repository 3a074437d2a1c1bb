"""Guarded power maps shared by the vector fields, certificates and oracles."""

from __future__ import annotations

from typing import TYPE_CHECKING, TypeAlias

import numpy as np
import numpy.typing as npt

from fxtsp.exceptions import InvalidParameterError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

FloatArray: TypeAlias = npt.NDArray[np.float64]

# Norms below this are treated as exactly zero by the power terms.
UNDERFLOW = 1e-300


def as_result(values: FloatArray) -> float | FloatArray:
    """Return a Python float for 0-d results, the array otherwise."""
    if values.ndim == 0:
        return float(values)
    return values


def nonneg_power(base: ArrayLike, exponent: ArrayLike) -> FloatArray:
    """Evaluate base**exponent for nonnegative bases via exp/log.

    A zero base maps to zero, which is the continuous extension for
    positive exponents.
    """
    v = np.asarray(base, dtype=np.float64)
    p = np.asarray(exponent, dtype=np.float64)
    positive = v > 0
    safe = np.where(positive, v, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(p * np.log(safe))
    return np.where(positive, out, 0.0)


def signed_power(x: ArrayLike, nu: ArrayLike) -> FloatArray:
    """Odd extension |x|**nu * sign(x) of the power map.

    Raises:
        InvalidParameterError: If nu is not strictly positive.
    """
    nu_arr = np.asarray(nu, dtype=np.float64)
    if np.any(nu_arr <= 0):
        raise InvalidParameterError(f"signed power exponent must be positive, got {nu}")
    x_arr = np.asarray(x, dtype=np.float64)
    return np.sign(x_arr) * nonneg_power(np.abs(x_arr), nu_arr)


def power_term(v: ArrayLike, xi: ArrayLike) -> FloatArray:
    """Evaluate v/|v|**xi along the last axis as |v|**(1-xi) * v/|v|.

    Vectors with norm below UNDERFLOW map to zero.
    """
    arr = np.asarray(v, dtype=np.float64)
    xi_arr = np.asarray(xi, dtype=np.float64)[..., np.newaxis]
    norm = np.linalg.norm(arr, axis=-1, keepdims=True)
    tiny = norm < UNDERFLOW
    safe_norm = np.where(tiny, 1.0, norm)
    magnitude = nonneg_power(safe_norm, 1.0 - xi_arr)
    return np.where(tiny, 0.0, magnitude * (arr / safe_norm))
