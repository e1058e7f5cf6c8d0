"""Input validation helpers shared across the package.

Every public entry point funnels its array/scalar arguments through these
checks so error messages are uniform and numerical preconditions (dtype,
range, shape) are enforced in one place.
"""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "check_model",
    "check_model_matrix",
    "check_bitstream",
    "check_probability",
    "check_positive",
    "check_weights",
]

FRACTION_BITS = 23


def check_model(model, name: str = "model") -> np.ndarray:
    """Coerce ``model`` to a finite 1-D float32 array.

    Values are interpreted as binary32; float64 inputs are rounded to the
    nearest binary32 value by the cast.
    """
    arr = np.asarray(model, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_model_matrix(samples, name: str = "model_samples") -> np.ndarray:
    """Coerce ``samples`` to a finite 2-D float32 array (rows are models)."""
    arr = np.asarray(samples, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_bitstream(bits, name: str = "bits") -> np.ndarray:
    """Validate a bitstream: 1-D, 0/1 entries, length a multiple of 23."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0 or arr.size % FRACTION_BITS != 0:
        raise ValueError(
            f"{name} length must be a positive multiple of {FRACTION_BITS}, "
            f"got {arr.size}"
        )
    arr = arr.astype(np.uint8, copy=False)
    if arr.max(initial=0) > 1:
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr


def check_probability(
    p, name: str = "p", *, high: float = 0.5, inclusive_high: bool = False
) -> float:
    """Validate a probability in [0, high) (or [0, high] when inclusive)."""
    if not isinstance(p, numbers.Real) or not np.isfinite(p):
        raise ValueError(f"{name} must be a finite real number, got {p!r}")
    p = float(p)
    if p < 0.0 or (p > high if inclusive_high else p >= high):
        bracket = "]" if inclusive_high else ")"
        raise ValueError(f"{name} must lie in [0, {high}{bracket}, got {p}")
    return p


def check_positive(value, name: str = "value", *, integer: bool = False):
    """Validate a strictly positive (optionally integer) scalar."""
    if integer:
        if not isinstance(value, numbers.Integral):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        if not isinstance(value, numbers.Real) or not np.isfinite(value):
            raise ValueError(f"{name} must be a finite real number, got {value!r}")
        value = float(value)
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_weights(weights, name: str = "weights") -> np.ndarray:
    """Validate aggregation weights: non-negative, summing to 1."""
    arr = np.asarray(weights, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be non-negative and finite")
    total = arr.sum()
    if not np.isclose(total, 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"{name} must sum to 1, got {total}")
    return arr
