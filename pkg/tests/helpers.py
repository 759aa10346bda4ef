"""Shared test oracles: finite differences and exact rational inversion."""

from fractions import Fraction

import numpy as np


def central_diff(fn, x, h=1e-5):
    """Central finite difference of a scalar function at a scalar point."""
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def rel_err(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def exact_inverse(matrix) -> np.ndarray:
    """Gauss-Jordan inverse over exact rationals; independent of any
    floating-point solver."""
    k = len(matrix)
    a = [[Fraction(x).limit_denominator(10**12) for x in row] for row in matrix]
    inv = [[Fraction(int(i == j)) for j in range(k)] for i in range(k)]
    for col in range(k):
        piv = max(range(col, k), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0:
            raise ZeroDivisionError("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        inv[col] = [v / p for v in inv[col]]
        for r in range(k):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [u - f * v for u, v in zip(a[r], a[col])]
                inv[r] = [u - f * v for u, v in zip(inv[r], inv[col])]
    return np.array([[float(v) for v in row] for row in inv])


def decaying_matrix(rho_per_class, k) -> np.ndarray:
    """Straight-line construction of the inverse-distance noise matrix,
    independent of the package implementation."""
    m = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                m[i, j] = rho_per_class[i] / abs(i - j)
        m[i, i] = 1.0 - m[i].sum()
    return m


EXAMPLE_MATRIX = np.array(
    [
        [0.725, 0.15, 0.075, 0.05],
        [0.15, 0.625, 0.15, 0.075],
        [0.075, 0.15, 0.625, 0.15],
        [0.05, 0.075, 0.15, 0.725],
    ]
)

# Two-decimal rendering of the inverse used as a golden comparison target
# (not a correct rounding of the true inverse; row sums massaged to 1).
EXAMPLE_INVERSE_PRINTED = np.array(
    [
        [1.45, -0.32, -0.08, -0.05],
        [-0.32, 1.77, -0.36, -0.09],
        [-0.08, -0.36, 1.77, -0.32],
        [-0.05, -0.09, -0.32, 1.45],
    ]
)
