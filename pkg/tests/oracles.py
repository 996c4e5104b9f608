"""Independent numerical oracles used across the test suite.

These deliberately avoid the library's own code paths: derivatives come
from Richardson-extrapolated central differences, integrals from dense
trapezoid sums.
"""

from __future__ import annotations

import math

import numpy as np


def _fd_coeffs(offsets: np.ndarray, order: int) -> np.ndarray:
    A = np.vander(np.asarray(offsets, dtype=float), increasing=True).T
    b = np.zeros(len(offsets))
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


def central_difference(f, x0: float, order: int, h: float, points: int) -> float:
    half = points // 2
    offs = np.arange(-half, half + 1)
    coeffs = _fd_coeffs(offs, order)
    return sum(c * f(x0 + o * h) for c, o in zip(coeffs, offs)) / h ** order


def fd_derivative(f, x0: float, order: int, h: float = 0.05, points: int = 11) -> float:
    """Richardson-extrapolated central difference of the given order."""
    acc = points - order
    if acc % 2:
        acc += 1
    d1 = central_difference(f, x0, order, h, points)
    d2 = central_difference(f, x0, order, h / 2.0, points)
    return (2 ** acc * d2 - d1) / (2 ** acc - 1)


def trapezoid_integral(f, a: float, b: float, n: int = 200_001) -> float:
    xs = np.linspace(a, b, n)
    ys = np.array([f(x) for x in xs])
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))
