"""Finite-difference stencils and quadrature helpers on a uniform 1-D grid."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> np.ndarray:
    """Weights w with sum_k w_k f(x + o_k h) ~ h**order * f^(order)(x)."""
    offs = np.asarray(offsets, dtype=float)
    n = len(offs)
    A = np.vander(offs, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


_CENTRAL2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_CENTRAL1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def second_derivative(f: np.ndarray, h: float, closure: str = "extrapolate") -> np.ndarray:
    """Fourth-order second derivative.

    closure="even" reflects f evenly about both end nodes (zero-flux ends);
    closure="extrapolate" uses one-sided six-point stencils at the two
    outermost nodes on each side.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    out = np.empty(n)
    out[2:-2] = (
        _CENTRAL2[0] * f[:-4]
        + _CENTRAL2[1] * f[1:-3]
        + _CENTRAL2[2] * f[2:-2]
        + _CENTRAL2[3] * f[3:-1]
        + _CENTRAL2[4] * f[4:]
    )
    if closure == "even":
        out[0] = (-2.0 * f[2] + 32.0 * f[1] - 30.0 * f[0]) / 12.0
        out[1] = (-f[1] + 16.0 * f[0] - 30.0 * f[1] + 16.0 * f[2] - f[3]) / 12.0
        out[-1] = (-2.0 * f[-3] + 32.0 * f[-2] - 30.0 * f[-1]) / 12.0
        out[-2] = (-f[-2] + 16.0 * f[-1] - 30.0 * f[-2] + 16.0 * f[-3] - f[-4]) / 12.0
    elif closure == "extrapolate":
        w0 = fd_weights((0, 1, 2, 3, 4, 5), 2)
        w1 = fd_weights((-1, 0, 1, 2, 3, 4), 2)
        out[0] = w0 @ f[:6]
        out[1] = w1 @ f[:6]
        out[-1] = w0 @ f[-1:-7:-1]
        out[-2] = w1 @ f[-1:-7:-1]
    else:
        raise ValueError(f"unknown closure {closure!r}")
    return out / (h * h)


def first_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative with one-sided ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty(f.size)
    out[2:-2] = (
        _CENTRAL1[0] * f[:-4] + _CENTRAL1[1] * f[1:-3] + _CENTRAL1[3] * f[3:-1] + _CENTRAL1[4] * f[4:]
    )
    w0 = fd_weights((0, 1, 2, 3, 4), 1)
    w1 = fd_weights((-1, 0, 1, 2, 3), 1)
    out[0] = w0 @ f[:5]
    out[1] = w1 @ f[:5]
    out[-1] = -(w0 @ f[-1:-6:-1])
    out[-2] = -(w1 @ f[-1:-6:-1])
    return out / h


def neumann_d2_banded(n: int, h: float) -> np.ndarray:
    """Banded (2, 2) storage of the even-closure second-derivative matrix.

    Row i, column j lives at ab[2 + i - j, j] (scipy.linalg.solve_banded layout).
    """
    ab = np.zeros((5, n))
    for off, c in zip(range(-2, 3), _CENTRAL2):
        # diagonal "off": entries (i, i + off)
        j = np.arange(max(0, off), min(n, n + off))
        ab[2 - off, j] += c
    # fold ghost nodes back into the first and last two rows
    ab[2 - 1, 1] += _CENTRAL2[1]  # row 0, col 1 (ghost -1 -> 1)
    ab[2 - 2, 2] += _CENTRAL2[0]  # row 0, col 2 (ghost -2 -> 2)
    ab[2 - 0, 1] += _CENTRAL2[0]  # row 1, col 1 (ghost -1 -> 1)
    ab[2 + 1, n - 2] += _CENTRAL2[3]  # row n-1, col n-2
    ab[2 + 2, n - 3] += _CENTRAL2[4]  # row n-1, col n-3
    ab[2 - 0, n - 2] += _CENTRAL2[4]  # row n-2, col n-2
    return ab / (h * h)


def banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = A x for a (2, 2)-banded matrix in solve_banded layout."""
    n = x.size
    y = ab[2] * x
    y[:-1] += ab[1, 1:] * x[1:]
    y[:-2] += ab[0, 2:] * x[2:]
    y[1:] += ab[3, :-1] * x[:-1]
    y[2:] += ab[4, :-2] * x[:-2]
    return y


def tail_exponent(values: np.ndarray, h: float, side: str) -> float:
    """Local decay rate kappa of a one-signed exponential tail g ~ A exp(-kappa |s|).

    Returns 0 when the last three nodes do not decay at one consistent rate,
    which is how round-off noise at the ends shows up.
    """
    g = values[:3] if side == "left" else values[:-4:-1]
    if g[0] * g[1] <= 0.0 or g[1] * g[2] <= 0.0:
        return 0.0
    k1, k2 = np.log(g[1] / g[0]) / h, np.log(g[2] / g[1]) / h
    if k1 <= 0.0 or abs(k1 - k2) > 0.05 * k1:
        return 0.0
    return float(k1)


def tail_mass(values: np.ndarray, h: float, side: str) -> float:
    """Integral of the exponential extension of `values` beyond one end."""
    kappa = tail_exponent(values, h, side)
    if kappa <= 0.0:
        return 0.0
    g0 = values[0] if side == "left" else values[-1]
    return float(g0 / kappa)


def cumulative_integral(f: np.ndarray, h: float, start: float = 0.0) -> np.ndarray:
    """Fourth-order running integral F_i = start + int_{s_0}^{s_i} f."""
    f = np.asarray(f, dtype=float)
    n = f.size
    inc = np.empty(n - 1)
    # interior panels: cubic through i-1..i+2
    inc[1:-1] = (-f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:]) / 24.0
    inc[0] = (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0
    inc[-1] = (9.0 * f[-1] + 19.0 * f[-2] - 5.0 * f[-3] + f[-4]) / 24.0
    out = np.empty(n)
    out[0] = start
    out[1:] = start + h * np.cumsum(inc)
    return out
