"""Radial (S^1-invariant) reduction of Kähler geometry on P^1.

A rotation-invariant Kähler form on P^1 is written as
``omega = v''(s) ds ^ dalpha`` with ``s = log|z|^2`` and ``v`` convex.  The
background is the round metric ``u0 = 2 log(1 + e^s)`` of area 4*pi, and the
anticanonical divisor is ``D = {0} + {inf}`` cut out by the section
``S = z`` with ``|S|_h^2 = e^s / (1 + e^s)^2``.

Profiles are sampled on a uniform grid in ``s`` truncated to ``[-L, L]``.
Every positive profile is carried with full relative accuracy in its
exponential tails, so logarithms and curvature stay meaningful out to the
poles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._numerics import (
    cumulative_integral,
    second_derivative,
    tail_mass,
)

LOG2 = float(np.log(2.0))
TWO_PI = 2.0 * np.pi


def _softplus(y):
    return np.logaddexp(0.0, y)


def _logistic(y):
    return np.exp(-_softplus(-y))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform grid in ``s`` on ``[-half_width, half_width]``.

    The compactified coordinate is ``x = e^s / (1 + e^s)``, so ``u0'' ds = 2 dx``.
    Quadrature is the trapezoid rule in ``s``, which converges spectrally for
    the smooth, exponentially decaying integrands used here.
    """

    node_count: int
    half_width: float = 60.0
    s: np.ndarray = field(init=False, repr=False)
    log_x: np.ndarray = field(init=False, repr=False)
    log_1mx: np.ndarray = field(init=False, repr=False)
    quadrature_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.node_count < 16:
            raise ValueError("node_count must be at least 16")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        s = np.linspace(-self.half_width, self.half_width, self.node_count)
        h = s[1] - s[0]
        w = np.full(self.node_count, h)
        w[0] = w[-1] = 0.5 * h
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "log_x", -_softplus(-s))
        object.__setattr__(self, "log_1mx", -_softplus(s))
        object.__setattr__(self, "quadrature_weights", w)

    @property
    def spacing(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def x_spacing(self) -> float:
        """Nominal x-spacing 1/N used for the C*h^2 tolerances."""
        return 1.0 / self.node_count

    @property
    def nodes_x(self) -> np.ndarray:
        return np.exp(self.log_x)

    def integrate(self, values, tails: bool = False) -> float:
        """Trapezoid integral over s; optionally add exponential tail extensions."""
        values = np.asarray(values, dtype=float)
        total = float(self.quadrature_weights @ values)
        if tails:
            h = self.spacing
            total += tail_mass(values, h, "left") + tail_mass(values, h, "right")
        return total

    def cumulative(self, values) -> tuple[np.ndarray, np.ndarray]:
        """Running integrals from the left pole and from the right pole.

        Returns ``(left, right)`` with ``left[i] ~ int_{-inf}^{s_i}`` and
        ``right[i] ~ int_{s_i}^{inf}``, each including the exponential tail.
        """
        values = np.asarray(values, dtype=float)
        h = self.spacing
        left = cumulative_integral(values, h, tail_mass(values, h, "left"))
        right = cumulative_integral(values[::-1], h, tail_mass(values, h, "right"))[::-1]
        return left, right


@dataclass(frozen=True)
class ConeParameters:
    beta: float
    beta0: float | None = None
    lam: int = 1
    epsilon: float = 1.0
    lp_exponent: float | None = None

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.beta0 is None:
            object.__setattr__(self, "beta0", self.beta)
        if not 0.0 < self.beta0 <= self.beta:
            raise ValueError("need 0 < beta0 <= beta")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.lam < 1:
            raise ValueError("lam must be a positive integer")
        upper = np.inf if self.beta0 >= 1.0 else 1.0 / (1.0 - self.beta0)
        if self.lp_exponent is None:
            p0 = 2.0 if not np.isfinite(upper) else 0.5 * (1.0 + upper)
            object.__setattr__(self, "lp_exponent", float(p0))
        if not 1.0 < self.lp_exponent < upper:
            raise ValueError("lp_exponent must lie in (1, 1/(1 - beta0))")

    @property
    def c_beta(self) -> float:
        """Einstein constant 1 - lam (1 - beta)."""
        return 1.0 - self.lam * (1.0 - self.beta)

    def with_epsilon(self, epsilon: float) -> "ConeParameters":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True, eq=False)
class BackgroundGeometry:
    grid: RadialGrid
    u0: np.ndarray
    u0_prime: np.ndarray
    u0_second: np.ndarray
    log_u0_second: np.ndarray
    divisor_norm: np.ndarray
    log_divisor_norm: np.ndarray
    ricci_potential: np.ndarray
    lam: int = 1

    def log_regularized(self, epsilon: float) -> np.ndarray:
        """log(|S|^2 + epsilon), stable for tiny |S|^2."""
        return np.logaddexp(self.log_divisor_norm, np.log(epsilon))


def build_background(grid: RadialGrid, params: ConeParameters | None = None) -> BackgroundGeometry:
    s = grid.s
    log_S = grid.log_x + grid.log_1mx
    log_u0pp = LOG2 + log_S
    return BackgroundGeometry(
        grid=grid,
        u0=2.0 * _softplus(s),
        u0_prime=2.0 * np.exp(grid.log_x),
        u0_second=np.exp(log_u0pp),
        log_u0_second=log_u0pp,
        divisor_norm=np.exp(log_S),
        log_divisor_norm=log_S,
        ricci_potential=np.zeros_like(s),
        lam=1 if params is None else params.lam,
    )


@dataclass(frozen=True, eq=False)
class MetricProfile:
    """Metric coefficient m = v'' (Riemannian metric 2 m |dz|^2 / |z|^2).

    ``tau`` is the moment coordinate v' in [0, 2]; ``tau_complement`` holds
    2 - tau computed from the right so both poles keep relative accuracy.
    """

    grid: RadialGrid
    m: np.ndarray
    tau: np.ndarray
    tau_complement: np.ndarray

    @property
    def log_m(self) -> np.ndarray:
        return np.log(self.m)

    @property
    def area(self) -> float:
        return TWO_PI * self.grid.integrate(self.m, tails=True)

    @property
    def cone_exponents(self) -> tuple[float, float]:
        return fit_tail_exponents(self.grid, self.m)

    @classmethod
    def from_density(cls, grid: RadialGrid, m) -> "MetricProfile":
        m = np.asarray(m, dtype=float)
        left, right = grid.cumulative(m)
        return cls(grid=grid, m=m, tau=left, tau_complement=right)


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    """Kähler potential phi with v = u0 + phi and its s-derivatives.

    ``v_second`` is the metric coefficient of omega_phi evaluated with full
    relative accuracy (from a closed form or from the right-hand side of the
    equation phi solves), never from a difference quotient of ``phi``.
    """

    grid: RadialGrid
    phi: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    v_second: np.ndarray
    tau_complement: np.ndarray
    normalization_tag: str = "none"
    residual: float = float("nan")
    newton_history: tuple[float, ...] = ()

    @classmethod
    def from_density(cls, bg: BackgroundGeometry, phi, m, tag: str = "none",
                     residual: float = float("nan"), history=()) -> "PotentialProfile":
        phi = np.asarray(phi, dtype=float)
        m = np.asarray(m, dtype=float)
        left, right = bg.grid.cumulative(m)
        return cls(bg.grid, phi, bg.u0 + phi, left, m, right, tag, residual, tuple(history))

    def shifted(self, c: float, tag: str | None = None) -> "PotentialProfile":
        return replace(self, phi=self.phi + c, v=self.v + c,
                       normalization_tag=self.normalization_tag if tag is None else tag)

    def metric(self) -> MetricProfile:
        return MetricProfile(self.grid, self.v_second, self.v_prime, self.tau_complement)

    @property
    def pole_values(self) -> tuple[float, float]:
        # end nodes sit within exp(-L) of the poles in x
        return float(self.phi[0]), float(self.phi[-1])


def zero_potential(bg: BackgroundGeometry) -> PotentialProfile:
    return PotentialProfile(bg.grid, np.zeros_like(bg.u0), bg.u0.copy(), bg.u0_prime.copy(),
                            bg.u0_second.copy(), 2.0 * np.exp(bg.grid.log_1mx), "zero")


@dataclass(frozen=True, eq=False)
class Density:
    """Volume form f(s) ds ^ dalpha."""

    grid: RadialGrid
    f: np.ndarray
    normalizer: float = 1.0

    @property
    def mass(self) -> float:
        return TWO_PI * self.grid.integrate(self.f, tails=True)


@dataclass(frozen=True, eq=False)
class TwistingProfile:
    epsilon: float
    chi_eps: np.ndarray


def twisting_profile(bg: BackgroundGeometry, epsilon: float) -> TwistingProfile:
    """Coefficient of chi_eps = i ddbar log(|S|^2 + eps) + omega_0.

    With f = |S|^2 and a = f / (f + eps) this equals
    (1 - a) (a + 2 f (1 - 2a)), manifestly positive for eps > 0.
    """
    f = bg.divisor_norm
    a = np.exp(bg.log_divisor_norm - bg.log_regularized(epsilon))
    one_minus_a = np.exp(np.log(epsilon) - bg.log_regularized(epsilon))
    return TwistingProfile(epsilon, one_minus_a * (a + 2.0 * f * (1.0 - 2.0 * a)))


@dataclass(frozen=True, eq=False)
class FootballOracle:
    """Closed-form conical KE metric of angle 2*pi*beta at both poles.

    ``phi_beta`` includes the constant log(1/beta)/beta that makes the
    Monge-Ampère equation hold with the integral normalization.
    """

    beta: float
    grid: RadialGrid
    v_beta: np.ndarray
    v_beta_prime: np.ndarray
    v_beta_second: np.ndarray
    log_v_beta_second: np.ndarray
    tau_complement: np.ndarray
    phi_beta: np.ndarray
    shift: float
    diameter_exact: float

    def profile(self) -> PotentialProfile:
        return PotentialProfile(self.grid, self.phi_beta, self.v_beta + self.shift, self.v_beta_prime,
                                self.v_beta_second, self.tau_complement, "football")

    def metric(self) -> MetricProfile:
        return MetricProfile(self.grid, self.v_beta_second, self.v_beta_prime, self.tau_complement)

    def log_rhs(self, bg: BackgroundGeometry) -> np.ndarray:
        """log of e^{-beta phi + h} |S|^{-2(1-beta)} u0''."""
        return (-self.beta * self.phi_beta + bg.ricci_potential
                - (1.0 - self.beta) * bg.log_divisor_norm + bg.log_u0_second)

    def residual(self, bg: BackgroundGeometry) -> float:
        """Max relative residual of the conical KE Monge-Ampère equation."""
        return float(np.max(np.abs(np.expm1(self.log_v_beta_second - self.log_rhs(bg)))))

    def normalization_integral(self, bg: BackgroundGeometry) -> float:
        return TWO_PI * self.grid.integrate(np.exp(self.log_rhs(bg)), tails=True)


def football_potential(beta: float, grid: RadialGrid) -> FootballOracle:
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    s = grid.s
    bs = beta * s
    v = (2.0 / beta) * _softplus(bs)
    log_vpp = np.log(2.0 * beta) + bs - 2.0 * _softplus(bs)
    shift = float(np.log(1.0 / beta) / beta)
    return FootballOracle(
        beta=beta,
        grid=grid,
        v_beta=v,
        v_beta_prime=2.0 * _logistic(bs),
        v_beta_second=np.exp(log_vpp),
        log_v_beta_second=log_vpp,
        tau_complement=2.0 * _logistic(-bs),
        phi_beta=v - 2.0 * _softplus(s) + shift,
        shift=shift,
        diameter_exact=float(np.pi / np.sqrt(beta)),
    )


def ricci_coefficient(m: MetricProfile) -> np.ndarray:
    """r = -(log m)'' so that Ric(omega) = r ds ^ dalpha.

    Ric >= c omega holds iff r >= c m pointwise.
    """
    if np.any(m.m <= 0.0):
        raise ValueError("metric coefficient must be positive")
    return -second_derivative(np.log(m.m), m.grid.spacing, closure="extrapolate")


def ricci_margin(metric: MetricProfile, comparison, beta: float) -> float:
    """min over nodes of r - beta * comparison (Ric >= beta * omega_cmp iff >= 0)."""
    r = ricci_coefficient(metric)
    return float(np.min(r - beta * np.asarray(comparison, dtype=float)))


def fit_tail_exponents(grid: RadialGrid, m, fraction: float = 0.1) -> tuple[float, float]:
    """Least-squares growth rates kappa with m ~ A exp(-kappa |s|) on the outer decile."""
    m = np.asarray(m, dtype=float)
    k = max(4, int(fraction * grid.node_count))
    logm = np.log(m)
    left = np.polyfit(grid.s[:k], logm[:k], 1)[0]
    right = -np.polyfit(grid.s[-k:], logm[-k:], 1)[0]
    return float(left), float(right)


@dataclass(frozen=True)
class ConeCheck:
    exponents: tuple[float, float]
    ratio_bounds: tuple[tuple[float, float], tuple[float, float]]
    conical: bool


def cone_asymptotics_check(m: MetricProfile, beta: float, fraction: float = 0.1,
                           exponent_tol: float = 0.02, spread_tol: float = 2.0) -> ConeCheck:
    """Compare m against the model cone coefficient exp(-beta |s|) near both poles.

    The verdict is "conical of angle 2*pi*beta" when both fitted exponents are
    within ``exponent_tol`` of beta and m / exp(-beta |s|) stays within a
    factor ``spread_tol`` of itself over each outer decile.
    """
    grid = m.grid
    k = max(4, int(fraction * grid.node_count))
    exps = fit_tail_exponents(grid, m.m, fraction)
    bounds = []
    ok = True
    for sl in (slice(0, k), slice(grid.node_count - k, grid.node_count)):
        ratio = np.exp(np.log(m.m[sl]) + beta * np.abs(grid.s[sl]))
        lo, hi = float(ratio.min()), float(ratio.max())
        bounds.append((lo, hi))
        ok &= bool(np.isfinite(hi) and lo > 0.0 and hi / lo <= spread_tol)
    ok &= all(abs(e - beta) <= exponent_tol for e in exps)
    return ConeCheck(exps, (bounds[0], bounds[1]), ok)


def volume_ratio(phi: PotentialProfile, bg: BackgroundGeometry) -> np.ndarray:
    """omega_phi / omega_0 = v'' / u0''."""
    return np.exp(np.log(phi.v_second) - bg.log_u0_second)


def lp_norm(ratio, p: float, bg: BackgroundGeometry) -> float:
    """(int |ratio|^p omega_0 / int omega_0)^(1/p)."""
    if p < 1.0:
        raise ValueError("p must be >= 1")
    ratio = np.abs(np.asarray(ratio, dtype=float))
    grid = bg.grid
    num = grid.integrate(ratio**p * bg.u0_second, tails=True)
    den = grid.integrate(bg.u0_second, tails=True)
    return float((num / den) ** (1.0 / p))
