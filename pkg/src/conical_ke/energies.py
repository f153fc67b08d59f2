"""Energy functionals on radial potentials (complex dimension one).

Every functional is available as a path integral over phi(t), 0 <= t <= 1,
sampled at Gauss-Legendre nodes, and where one exists as a closed form.
A measure ``g omega`` integrates as ``2*pi * int g m ds``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .families import bump
from .radial import TWO_PI, BackgroundGeometry, PotentialProfile, twisting_profile
from ._numerics import first_derivative

PATH_RULES = ("linear", "quadratic", "detour")


@lru_cache(maxsize=None)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class PotentialPath:
    """phi(t) joining 0 to ``endpoint``.

    linear: t phi; quadratic: t^2 phi; detour: t phi + t (1 - t) a b(s),
    where b is a fixed compact bump, so the detour leaves the straight segment.
    """

    endpoint: PotentialProfile
    bg: BackgroundGeometry
    rule: str = "linear"
    samples: int = 64
    detour_amplitude: float = 0.05

    def __post_init__(self):
        if self.rule not in PATH_RULES:
            raise ValueError(f"unknown path rule {self.rule!r}")

    # Gauss-Legendre in u with t = u^2: toward a cone endpoint the integrand
    # has a fractional power of t at t = 0, which plain nodes resolve poorly
    @property
    def t_samples(self) -> np.ndarray:
        return _gauss_legendre(self.samples)[0] ** 2

    @property
    def t_weights(self) -> np.ndarray:
        u, w = _gauss_legendre(self.samples)
        return 2.0 * u * w

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(phi(t), phi_dot(t), m_t) with m_t the metric coefficient of omega_t."""
        phi = self.endpoint.phi
        dm = self.endpoint.v_second - self.bg.u0_second
        u0pp = self.bg.u0_second
        if self.rule == "linear":
            out = (t * phi, phi, (1.0 - t) * u0pp + t * self.endpoint.v_second)
        elif self.rule == "quadratic":
            out = (t * t * phi, 2.0 * t * phi, u0pp + t * t * dm)
        else:
            b, _, b2 = bump(self.bg.grid.s, 4.0)
            a = self.detour_amplitude
            out = (t * phi + t * (1 - t) * a * b, phi + (1 - 2 * t) * a * b,
                   (1.0 - t) * u0pp + t * self.endpoint.v_second + t * (1 - t) * a * b2)
        if np.any(out[2] <= 0.0):
            raise ValueError(f"path leaves the space of Kähler potentials at t = {t:.4g}")
        return out

    def __iter__(self):
        for t, w in zip(self.t_samples, self.t_weights):
            yield w, self.at(t)


def _integrate(bg: BackgroundGeometry, g, tails: bool = True) -> float:
    # integrands decay like e^{-beta |s|}; at small beta the truncated tail is
    # ~ L e^{-beta L}, so extend it exponentially
    return bg.grid.integrate(g, tails=tails)


def _end_slopes(m: np.ndarray, h: float) -> tuple[float, float]:
    """Limits of (log m)' at s = -inf and s = +inf, read from the grid ends."""
    slope = first_derivative(np.log(m), h)
    return float(slope[0]), float(slope[-1])


def _ricci_pairing(bg: BackgroundGeometry, dphi: np.ndarray, m: np.ndarray,
                   ends: tuple[float, float]) -> float:
    """int dphi r ds with r = -(log m)'', integrated by parts once.

    The second difference of log m (|log m| ~ 60 near the ends) leaves a
    biased round-off of ~1e-9 in int r; first differences do not.  `ends`
    are the limiting slopes of log m at -inf and +inf, so point masses at
    cone points are not included.
    """
    h = bg.grid.spacing
    slope = first_derivative(np.log(m), h)
    boundary = dphi[-1] * ends[1] - dphi[0] * ends[0]
    return _integrate(bg, first_derivative(dphi, h) * slope) - boundary


def k_energy_path(path: PotentialPath) -> float:
    """E = -int_0^1 dt int phi_dot (Ric(omega_t) - omega_t)."""
    bg = path.bg
    h = bg.grid.spacing
    # for t > 0, m_t = a u0'' + b m_1 + (compact) with b > 0, so log m_t ends
    # on the slower of the two end rates even where the turn lies past the grid
    lo0, hi0 = _end_slopes(bg.u0_second, h)
    lo1, hi1 = _end_slopes(path.endpoint.v_second, h)
    ends = (min(lo0, lo1), max(hi0, hi1))
    total = 0.0
    for w, (_, dphi, m) in path:
        total += w * (_ricci_pairing(bg, dphi, m, ends) - _integrate(bg, dphi * m))
    return float(-TWO_PI * total)


def i_functional(path: PotentialPath) -> float:
    return float(TWO_PI * sum(w * _integrate(path.bg, dphi * m) for w, (_, dphi, m) in path))


def q_functional(phi: PotentialProfile, bg: BackgroundGeometry) -> float:
    """-int_0^1 dt int phi_dot Ric(omega0); Ric(omega0) = omega0 makes it path-free."""
    return -TWO_PI * _integrate(bg, phi.phi * bg.u0_second)


def entropy(phi: PotentialProfile, bg: BackgroundGeometry, against: str = "phi") -> float:
    """int log(omega_phi / omega0) against omega_phi ("phi") or omega0 ("background")."""
    log_ratio = np.log(phi.v_second) - bg.log_u0_second
    weight = phi.v_second if against == "phi" else bg.u0_second
    return TWO_PI * _integrate(bg, log_ratio * weight)


def k_energy_closed(phi: PotentialProfile, bg: BackgroundGeometry, variant: str = "b",
                    path: PotentialPath | None = None) -> float:
    """Entropy + I + Q.  Variant "a" weights the entropy by omega0, "b" by omega_phi."""
    if variant not in ("a", "b"):
        raise ValueError("variant must be 'a' or 'b'")
    path = PotentialPath(phi, bg) if path is None else path
    ent = entropy(phi, bg, "background" if variant == "a" else "phi")
    return ent + i_functional(path) + q_functional(phi, bg)


def j_chi_eps_path(path: PotentialPath, epsilon: float) -> float:
    chi = twisting_profile(path.bg, epsilon).chi_eps
    return float(TWO_PI * sum(w * _integrate(path.bg, dphi * (chi - m)) for w, (_, dphi, m) in path))


def _remainder(path: PotentialPath) -> float:
    u0pp = path.bg.u0_second
    return float(TWO_PI * sum(w * _integrate(path.bg, dphi * (u0pp - m)) for w, (_, dphi, m) in path))


def j_chi_eps_closed(phi: PotentialProfile, bg: BackgroundGeometry, epsilon: float,
                     path: PotentialPath | None = None) -> float:
    """int log(|S|^2 + eps)(omega_phi - omega0) + path remainder."""
    path = PotentialPath(phi, bg) if path is None else path
    log_reg = bg.log_regularized(epsilon)
    return TWO_PI * _integrate(bg, log_reg * (phi.v_second - bg.u0_second)) + _remainder(path)


def j_chi(path: PotentialPath) -> float:
    """Divisor form: 2*pi int dt (phi_dot(0) + phi_dot(inf)) - int dt int phi_dot omega_t."""
    total = 0.0
    for w, (_, dphi, m) in path:
        if not (np.isfinite(dphi[0]) and np.isfinite(dphi[-1])):
            raise ValueError("potential has no finite pole limits")
        total += w * (dphi[0] + dphi[-1] - _integrate(path.bg, dphi * m))
    return float(TWO_PI * total)


def j_chi_closed(phi: PotentialProfile, bg: BackgroundGeometry, path: PotentialPath | None = None) -> float:
    path = PotentialPath(phi, bg) if path is None else path
    return TWO_PI * _integrate(bg, bg.log_divisor_norm * (phi.v_second - bg.u0_second)) + _remainder(path)


def j0(phi: PotentialProfile, bg: BackgroundGeometry) -> float:
    """int phi (omega0 - omega_phi); equals int |d phi|^2 >= 0."""
    return TWO_PI * _integrate(bg, phi.phi * (bg.u0_second - phi.v_second))


@dataclass(frozen=True)
class TwistedEnergies:
    k_energy: float
    j_chi_eps: float
    j_chi: float
    eps_twisted: float
    limit_twisted: float


def twisted_energies(phi: PotentialProfile, epsilon: float, beta: float, bg: BackgroundGeometry,
                     rule: str = "linear", samples: int = 64) -> TwistedEnergies:
    """(E + (1-beta) J_chi_eps, E + (1-beta) J_chi) with their summands."""
    path = PotentialPath(phi, bg, rule, samples)
    e = k_energy_path(path)
    je = j_chi_eps_path(path, epsilon)
    jl = j_chi(path)
    return TwistedEnergies(e, je, jl, e + (1.0 - beta) * je, e + (1.0 - beta) * jl)


def c3_constant(bg: BackgroundGeometry | None = None) -> float:
    """int log(1 + 1/|S|^2) omega0 = 4*pi int_0^1 log(1 + 1/(x(1-x))) dx.

    Without a grid the integral is done by adaptive quadrature in x.
    """
    if bg is None:
        val, _ = integrate.quad(lambda x: np.log1p(1.0 / (x * (1.0 - x))), 0.0, 1.0,
                                points=[0.5], limit=200, epsabs=1e-14, epsrel=1e-13)
        return float(4.0 * np.pi * val)
    log_term = np.logaddexp(0.0, -bg.log_divisor_norm)
    return TWO_PI * bg.grid.integrate(log_term * bg.u0_second, tails=True)


@dataclass(frozen=True)
class EnergyReport:
    E_path: float
    E_closed_variant_a: float
    E_closed_variant_b: float
    I: float
    Q: float
    J_chi_eps_path: float
    J_chi_eps_closed: float
    J_chi: float
    J_chi_closed: float
    J0: float
    twisted_eps: float
    twisted_limit: float
    c3_estimate: float
    c6_estimate: float

    @property
    def matching_variant(self) -> str | None:
        """Closed K-energy variant within 1e-5 relative of the path value."""
        tol = 1e-5 * max(1.0, abs(self.E_path))
        hits = [v for v, val in (("a", self.E_closed_variant_a), ("b", self.E_closed_variant_b))
                if abs(val - self.E_path) <= tol]
        return hits[0] if len(hits) == 1 else None


def energy_report(phi: PotentialProfile, bg: BackgroundGeometry, epsilon: float, beta: float,
                  rule: str = "linear", samples: int = 64) -> EnergyReport:
    path = PotentialPath(phi, bg, rule, samples)
    e = k_energy_path(path)
    i_val = i_functional(path)
    q_val = q_functional(phi, bg)
    je = j_chi_eps_path(path, epsilon)
    jl = j_chi(path)
    tw = e + (1.0 - beta) * je
    return EnergyReport(
        E_path=e,
        E_closed_variant_a=entropy(phi, bg, "background") + i_val + q_val,
        E_closed_variant_b=entropy(phi, bg, "phi") + i_val + q_val,
        I=i_val,
        Q=q_val,
        J_chi_eps_path=je,
        J_chi_eps_closed=j_chi_eps_closed(phi, bg, epsilon, path),
        J_chi=jl,
        J_chi_closed=j_chi_closed(phi, bg, path),
        J0=j0(phi, bg),
        twisted_eps=tw,
        twisted_limit=e + (1.0 - beta) * jl,
        c3_estimate=c3_constant(bg),
        c6_estimate=abs(tw),
    )


@dataclass(frozen=True)
class PropernessScan:
    j0: np.ndarray
    energy: np.ndarray
    slope: float
    offset: float

    @property
    def min_j0(self) -> float:
        return float(self.j0.min())


def properness_scan(potentials, beta: float, bg: BackgroundGeometry) -> PropernessScan:
    """(J0, E_{(1-beta)D}) pairs and an affine envelope E >= C4 J0 - C5 touching from below."""
    j = np.array([j0(p, bg) for p in potentials])
    e = np.array([twisted_energies(p, 1.0, beta, bg).limit_twisted for p in potentials])
    slope = float(np.polyfit(j, e, 1)[0]) if len(j) > 1 and np.ptp(j) > 0 else 0.0
    slope = max(slope, 0.0)
    offset = float(np.max(slope * j - e))
    return PropernessScan(j, e, slope, offset)


@dataclass(frozen=True)
class MonotonicityCertificate:
    increments: np.ndarray
    violations: list[tuple[int, float, float]]

    @property
    def monotone(self) -> bool:
        return not self.violations


def monotonicity_check(path, rel_tol: float = 1e-8) -> MonotonicityCertificate:
    """Flag nodes where the twisted energy rises by more than rel_tol (1 + |E|)."""
    trace = np.asarray(path.energy_trace, dtype=float)
    inc = np.diff(trace)
    bad = [(k + 1, float(path.t_nodes[k + 1]), float(d))
           for k, d in enumerate(inc) if d > rel_tol * (1.0 + abs(trace[k]))]
    return MonotonicityCertificate(inc, bad)
