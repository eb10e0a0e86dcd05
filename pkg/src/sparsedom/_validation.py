"""Small input validation helpers."""
import numbers

import numpy as np

from .errors import ContractViolation


def as_points(x, n=None, name="points"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :] if n is None or arr.shape[0] == n else arr[:, None]
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a 2-d array of shape (m, n)")
    if n is not None and arr.shape[1] != n:
        raise ContractViolation(f"{name} must have {n} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite values")
    return arr


def as_point(x, n=None, name="point"):
    arr = np.asarray(x, dtype=float).ravel()
    if n is not None and arr.shape[0] != n:
        raise ContractViolation(f"{name} must have length {n}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite values")
    return arr


def grid_function(f, size, name="f"):
    arr = np.asarray(f)
    if arr.dtype.kind not in "fcib":
        raise ContractViolation(f"{name} must be numeric")
    if arr.dtype.kind in "ib":
        arr = arr.astype(float)
    arr = arr.ravel()
    if arr.shape[0] != size:
        raise ContractViolation(f"{name} has {arr.shape[0]} values, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite values")
    return arr


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ContractViolation(f"{name} must be a finite real number")
    if low is not None and (value < low or (low_open and value == low)):
        raise ContractViolation(f"{name}={value} is below the admissible range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ContractViolation(f"{name}={value} is above the admissible range")
    return float(value)


def check_int(value, name, low=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ContractViolation(f"{name} must be an integer")
    if low is not None and value < low:
        raise ContractViolation(f"{name}={value} must be >= {low}")
    return int(value)


def check_exponent(p, name="p"):
    return check_real(p, name, low=1.0)


def conjugate(p):
    """Hölder conjugate exponent, with 1 <-> inf."""
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)
