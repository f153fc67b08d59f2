"""Closed-form test potentials: zonal Legendre series and a compact bump."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as L

from .radial import BackgroundGeometry, PotentialProfile

_MU_PROBE = np.linspace(-1.0, 1.0, 2001)


def legendre_potential(bg: BackgroundGeometry, coeffs, tag: str = "legendre") -> PotentialProfile:
    """phi = sum_k a_k P_k(2x - 1) for k >= 1 (coeffs[0] is the constant term).

    Zonal Legendre polynomials are eigenfunctions of the round Laplacian,
    which gives omega_phi / omega_0 = 1 - (1/2) sum_k k (k + 1) a_k P_k.
    """
    grid = bg.grid
    coeffs = np.asarray(coeffs, dtype=float)
    x = np.exp(grid.log_x)
    one_minus_x = np.exp(grid.log_1mx)
    mu = x - one_minus_x
    k = np.arange(coeffs.size)
    phi = L.legval(mu, coeffs)
    dphi = L.legval(mu, L.legder(coeffs))
    ratio = 1.0 - 0.5 * L.legval(mu, coeffs * k * (k + 1))
    if np.any(ratio <= 0.0):
        raise ValueError("coefficients leave the space of Kähler potentials")
    v_prime = 2.0 * x * (1.0 + one_minus_x * dphi)
    tau_c = 2.0 * one_minus_x * (1.0 - x * dphi)
    m = bg.u0_second * ratio
    return PotentialProfile(grid, phi, bg.u0 + phi, v_prime, m, tau_c, tag)


def legendre_min_ratio(coeffs) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    k = np.arange(coeffs.size)
    return float(np.min(1.0 - 0.5 * L.legval(_MU_PROBE, coeffs * k * (k + 1))))


def random_legendre_coeffs(rng: np.random.Generator, degree: int = 6, floor: float = 0.15,
                           constant: bool = True) -> np.ndarray:
    """Random smooth potential whose volume ratio stays above ``floor``."""
    a = np.zeros(degree + 1)
    a[1:] = rng.standard_normal(degree) / np.arange(1, degree + 1) ** 2
    if constant:
        a[0] = rng.standard_normal()
    k = np.arange(degree + 1)
    worst = np.max(np.abs(0.5 * L.legval(_MU_PROBE, a * k * (k + 1))))
    scale = rng.uniform(0.2, 1.0) * (1.0 - floor) / worst
    a[1:] *= scale
    return a


def random_potentials(seed: int, count: int, bg: BackgroundGeometry, degree: int = 6):
    rng = np.random.default_rng(seed)
    return [legendre_potential(bg, random_legendre_coeffs(rng, degree), tag=f"random{i}")
            for i in range(count)]


def bump(s, width: float = 4.0):
    """C-infinity bump exp(-1/(1 - (s/w)^2)) with its first two s-derivatives."""
    s = np.asarray(s, dtype=float)
    y = s / width
    inside = np.abs(y) < 1.0
    b = np.zeros_like(s)
    b1 = np.zeros_like(s)
    b2 = np.zeros_like(s)
    yi = y[inside]
    q = 1.0 - yi * yi
    g = np.exp(-1.0 / q)
    b[inside] = g
    b1[inside] = g * (-2.0 * yi / q**2) / width
    b2[inside] = g * (6.0 * yi**4 - 2.0) / q**4 / width**2
    return b, b1, b2


def bump_potential(bg: BackgroundGeometry, amplitude: float = 0.1, width: float = 4.0,
                   center: float = 0.0) -> PotentialProfile:
    """u0 + amplitude * bump, the manufactured-solution potential."""
    grid = bg.grid
    b, b1, b2 = bump(grid.s - center, width)
    m = bg.u0_second + amplitude * b2
    if np.any(m <= 0.0):
        raise ValueError("bump amplitude too large for a Kähler potential")
    phi = amplitude * b
    tau_c = 2.0 * np.exp(grid.log_1mx) - amplitude * b1
    return PotentialProfile(grid, phi, bg.u0 + phi, bg.u0_prime + amplitude * b1, m, tau_c, "bump")


def scaled_potential(base: PotentialProfile, a: float, bg: BackgroundGeometry) -> PotentialProfile:
    """a * base, interpolating every profile linearly from the background."""
    two_1mx = 2.0 * np.exp(bg.grid.log_1mx)
    m = bg.u0_second + a * (base.v_second - bg.u0_second)
    if np.any(m <= 0.0):
        raise ValueError("scaled potential is not Kähler")
    return PotentialProfile(bg.grid, a * base.phi, bg.u0 + a * base.phi,
                            bg.u0_prime + a * (base.v_prime - bg.u0_prime), m,
                            two_1mx + a * (base.tau_complement - two_1mx), f"{base.normalization_tag}x{a:g}")
