"""Dense 2-D float64 kernel.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
Every helper here checks shapes up front and never broadcasts.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not line up."""


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a C-contiguous float64 2-D array (a copy if needed)."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def column(values):
    """Build an (n x 1) column from a flat sequence."""
    return as_matrix(np.asarray(values, dtype=np.float64).reshape(-1, 1))


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def transpose(a):
    return np.ascontiguousarray(as_matrix(a).T)


def axpy(alpha, x, y):
    """Return ``alpha * x + y`` for equally shaped matrices."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"axpy shape mismatch: {x.shape} vs {y.shape}")
    return float(alpha) * x + y


def sq_l2(a):
    """Sum of squared entries."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.sum(a * a))


def check_same_shape(a, b, what="operands"):
    if a.shape != b.shape:
        raise ShapeError(f"{what} shape mismatch: {a.shape} vs {b.shape}")
