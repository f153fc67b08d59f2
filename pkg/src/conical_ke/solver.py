"""Radial Monge-Ampère solvers: v'' = F(s, v) on the s-grid.

In complex dimension one the Calabi-Yau problem omega_phi = eta is the
linear equation u0'' + phi'' = f.  The twisted continuity equation and the
non-positive branch are semilinear and are solved by damped Newton with a
banded Jacobian.

All second derivatives of potentials use the even-closure stencil, whose
trapezoid-weighted column sums vanish, so discrete mass is conserved
exactly and the metric coefficient can always be read off the right-hand
side with full relative accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from ._numerics import banded_matvec, neumann_d2_banded
from .radial import (
    BackgroundGeometry,
    ConeParameters,
    Density,
    PotentialProfile,
    football_potential,
    lp_norm,
)

_D2_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _apply_d2(bg: BackgroundGeometry, phi: np.ndarray) -> np.ndarray:
    """D2 phi with its weighted mean removed.

    The exact operator has zero trapezoid mean; round-off in the 1/h^2
    stencil leaves a spurious mass of ~1e-10 that the constant mode of
    the nearly singular Jacobian (small t) would amplify.
    """
    w = bg.grid.quadrature_weights
    out = banded_matvec(_d2(bg), phi)
    return out - (w @ out) / w.sum()


def _d2(bg: BackgroundGeometry) -> np.ndarray:
    key = (bg.grid.node_count, bg.grid.half_width)
    ab = _D2_CACHE.get(key)
    if ab is None:
        ab = neumann_d2_banded(bg.grid.node_count, bg.grid.spacing)
        _D2_CACHE[key] = ab
    return ab


class SolverError(RuntimeError):
    pass


class UnsolvableClassError(SolverError):
    """Right-hand side does not have the mass of the Kähler class."""


class StepFailure(SolverError):
    def __init__(self, message: str, t: float | None = None, history=()):
        super().__init__(message)
        self.t = t
        self.history = tuple(history)


class PathFailure(SolverError):
    def __init__(self, message: str, last_t: float, path: "ContinuityPath | None" = None):
        super().__init__(f"{message} (last reached t = {last_t:.6g})")
        self.last_t = last_t
        self.path = path


@dataclass(frozen=True)
class NewtonConfig:
    abs_tolerance: float = 1e-9
    # a step converges once the residual is below abs_tolerance and the
    # last Newton update is below step_tolerance
    step_tolerance: float = 1e-7
    max_iterations: int = 30
    min_damping: float = 2.0**-12
    positivity_floor: float = 1e-12
    # nodes with u0'' below this are excluded from the positivity test:
    # there v'' is far below the round-off of the difference quotient
    positivity_support: float = 1e-8

    def __post_init__(self):
        if self.abs_tolerance <= 0:
            raise ValueError("abs_tolerance must be positive")
        if self.positivity_floor <= 0:
            raise ValueError("positivity_floor must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.min_damping <= 1:
            raise ValueError("min_damping must lie in (0, 1]")


Normalization = str | Callable[[np.ndarray], float]


@dataclass(frozen=True, eq=False)
class CalabiYauProblem:
    """omega_phi = rhs.  ``normalization`` is "mean" (int phi omega0 = 0),
    "pole" (phi -> 0 at s = -inf) or a callable phi -> additive shift."""

    rhs: Density
    normalization: Normalization = "mean"
    mass_tolerance: float = 1e-6


def smooth_volume_form(beta: float, epsilon: float, bg: BackgroundGeometry) -> Density:
    """eta_eps = c_eps e^{-beta phi_beta} (|S|^2 + eps)^{beta - 1} u0''.

    Written through the football density v_beta'' = e^{-beta phi_beta}
    |S|^{2(beta-1)} u0'' so that every factor stays in log form.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    oracle = football_potential(beta, bg.grid)
    log_f = oracle.log_v_beta_second + (1.0 - beta) * (bg.log_divisor_norm - bg.log_regularized(epsilon))
    raw = np.exp(log_f)
    c_eps = 2.0 / bg.grid.integrate(raw, tails=True)
    return Density(bg.grid, c_eps * raw, c_eps)


def _shift_for(normalization: Normalization, phi: np.ndarray, bg: BackgroundGeometry) -> tuple[float, str]:
    if callable(normalization):
        return float(normalization(phi)), getattr(normalization, "tag", "custom")
    if normalization == "mean":
        w = bg.grid.quadrature_weights * bg.u0_second
        return -float(w @ phi / w.sum()), "mean"
    if normalization == "pole":
        return -float(phi[0]), "pole"
    raise ValueError(f"unknown normalization {normalization!r}")


def solve_calabi_yau(problem: CalabiYauProblem, bg: BackgroundGeometry) -> PotentialProfile:
    rhs = problem.rhs
    rel = abs(rhs.mass / (4.0 * np.pi) - 1.0)
    if rel > problem.mass_tolerance:
        raise UnsolvableClassError(f"right-hand side mass differs from 4*pi by {rel:.3e} (relative)")
    grid = bg.grid
    w = grid.quadrature_weights
    # match discrete masses so the singular system is consistent
    f = rhs.f * (w @ bg.u0_second) / (w @ rhs.f)
    g = f - bg.u0_second
    ab = _d2(bg).copy()
    n = grid.node_count
    mid = n // 2
    for j in range(max(0, mid - 2), min(n, mid + 3)):
        ab[2 + mid - j, j] = 0.0
    ab[2, mid] = 1.0
    b = g.copy()
    b[mid] = 0.0
    phi = solve_banded((2, 2), ab, b)
    residual = float(np.max(np.abs(_apply_d2(bg, phi) - g)))
    c, tag = _shift_for(problem.normalization, phi, bg)
    return PotentialProfile.from_density(bg, phi + c, f, tag, residual)


def normalize_reference(phi_eps: PotentialProfile, beta: float, epsilon: float,
                        bg: BackgroundGeometry) -> PotentialProfile:
    """Shift phi_eps so that int e^{-beta phi} (|S|^2 + eps)^{beta-1} omega0 = 4*pi."""
    log_w = -beta * phi_eps.phi + (beta - 1.0) * bg.log_regularized(epsilon) + bg.log_u0_second
    top = float(np.max(log_w))
    total = bg.grid.integrate(np.exp(log_w - top), tails=True)
    c = (top + np.log(total / 2.0)) / beta
    return phi_eps.shifted(c, "integral")


def psi_log_rhs(phi_eps: PotentialProfile, beta: float, epsilon: float,
                 bg: BackgroundGeometry) -> np.ndarray:
    return (-beta * phi_eps.phi + bg.ricci_potential
            + (beta - 1.0) * bg.log_regularized(epsilon) + bg.log_u0_second)


def solve_psi(phi_eps: PotentialProfile, params: ConeParameters, bg: BackgroundGeometry) -> PotentialProfile:
    """psi_eps with omega_psi = e^{-beta phi_eps} (|S|^2 + eps)^{beta-1} omega0.

    ``phi_eps`` is renormalized first.  The free constant of psi_eps is
    fixed by int (psi - phi_eps) omega_psi = 0, which is the t -> 0 limit
    of the continuity path.
    """
    beta, eps = params.beta, params.epsilon
    ref = normalize_reference(phi_eps, beta, eps, bg)
    f = np.exp(psi_log_rhs(ref, beta, eps, bg))
    wf = bg.grid.quadrature_weights * f

    def limit_shift(psi):
        return -float(wf @ (psi - ref.phi) / wf.sum())

    limit_shift.tag = "t0-limit"
    return solve_calabi_yau(CalabiYauProblem(Density(bg.grid, f), limit_shift), bg)


@dataclass(frozen=True, eq=False)
class SmoothingChain:
    """eta_eps -> phi_eps (integral-normalized) -> psi_eps for one (beta, eps)."""

    params: ConeParameters
    eta: Density
    phi_eps: PotentialProfile
    psi_eps: PotentialProfile


def smoothing_chain(params: ConeParameters, bg: BackgroundGeometry) -> SmoothingChain:
    eta = smooth_volume_form(params.beta, params.epsilon, bg)
    phi = solve_calabi_yau(CalabiYauProblem(eta, "mean"), bg)
    phi = normalize_reference(phi, params.beta, params.epsilon, bg)
    psi = solve_psi(phi, params, bg)
    return SmoothingChain(params, eta, phi, psi)


@dataclass(frozen=True, eq=False)
class TwistedProblem:
    """u0'' + phi'' = exp(-t phi - (beta - t) phi_eps + h) (|S|^2 + eps)^{beta-1} u0''."""

    t: float
    beta: float
    epsilon: float
    reference: PotentialProfile
    bg: BackgroundGeometry

    def __post_init__(self):
        if not 0.0 <= self.t <= self.beta:
            raise ValueError(f"t must lie in [0, beta], got {self.t}")

    def log_base(self) -> np.ndarray:
        bg = self.bg
        return (-(self.beta - self.t) * self.reference.phi + bg.ricci_potential
                + (self.beta - 1.0) * bg.log_regularized(self.epsilon) + bg.log_u0_second)

    def rhs(self, phi) -> np.ndarray:
        return np.exp(self.log_base() - self.t * np.asarray(phi))

    def as_calabi_yau(self) -> CalabiYauProblem:
        if self.t != 0.0:
            raise ValueError("only the t = 0 problem is a Calabi-Yau problem")
        return CalabiYauProblem(Density(self.bg.grid, np.exp(self.log_base())))


@dataclass
class _NewtonOutcome:
    phi: np.ndarray
    m: np.ndarray
    history: list[float]
    damped: bool


def _newton(phi0: np.ndarray, log_base: np.ndarray, coef: float, bg: BackgroundGeometry,
            config: NewtonConfig, upper_bound: float | None = None) -> _NewtonOutcome:
    """Damped Newton for u0'' + D2 phi = exp(log_base - coef * phi)."""
    ab = _d2(bg)
    u0pp = bg.u0_second
    support = u0pp > config.positivity_support

    def evaluate(phi):
        with np.errstate(over="ignore"):
            F = np.exp(log_base - coef * phi)
        R = u0pp + _apply_d2(bg, phi) - F
        return F, R

    def admissible(phi, F, R):
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(R))):
            return False
        if upper_bound is not None and np.max(phi) > upper_bound:
            return False
        vpp = F[support] + R[support]
        return bool(np.min(vpp) > config.positivity_floor)

    phi = np.array(phi0, dtype=float)
    F, R = evaluate(phi)
    if not admissible(phi, F, R):
        raise StepFailure("initial guess is not an admissible potential")
    history = [float(np.max(np.abs(R)))]
    damped = False
    last_update = 0.0

    def converged():
        return history[-1] < config.abs_tolerance and last_update <= config.step_tolerance

    for _ in range(config.max_iterations):
        if converged():
            break
        J = ab.copy()
        J[2] += coef * F
        try:
            delta = solve_banded((2, 2), J, -R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StepFailure(f"singular Newton system: {exc}", history=history) from exc
        lam = 1.0
        stalled = False
        while True:
            trial = phi + lam * delta
            Ft, Rt = evaluate(trial)
            res = float(np.max(np.abs(Rt))) if np.all(np.isfinite(Rt)) else np.inf
            if admissible(trial, Ft, Rt) and res < (1.0 - 1e-4 * lam) * history[-1]:
                break
            lam *= 0.5
            damped = True
            if lam < config.min_damping:
                if history[-1] >= config.abs_tolerance:
                    raise StepFailure("damping underflow", history=history)
                # residual already at round-off; the update is noise in a
                # poorly conditioned mode (small t), so stop here
                stalled = True
                break
        if stalled:
            last_update = 0.0
            break
        phi, F, R = trial, Ft, Rt
        history.append(res)
        last_update = lam * float(np.max(np.abs(delta)))
    if not converged():
        raise StepFailure(f"no convergence in {config.max_iterations} iterations "
                          f"(residual {history[-1]:.3e}, update {last_update:.3e})", history=history)
    return _NewtonOutcome(phi, F, history, damped)


def solve_continuity_step(problem: TwistedProblem, initial_guess: PotentialProfile | np.ndarray,
                          config: NewtonConfig = NewtonConfig()) -> PotentialProfile:
    if problem.t <= 0.0:
        raise ValueError("continuity steps need t > 0; use solve_psi at t = 0")
    phi0 = initial_guess.phi if isinstance(initial_guess, PotentialProfile) else initial_guess
    try:
        out = _newton(phi0, problem.log_base(), problem.t, problem.bg, config)
    except StepFailure as exc:
        exc.t = problem.t
        raise
    return PotentialProfile.from_density(problem.bg, out.phi, out.m, f"t={problem.t:.17g}",
                                         out.history[-1], out.history)


def path_tangent(problem: TwistedProblem, phi: PotentialProfile) -> np.ndarray | None:
    """d phi / dt from (D2 + t F) phi_dot = -F (phi - phi_eps); None at t = 0."""
    if problem.t <= 0.0:
        return None
    F = phi.v_second
    J = _d2(problem.bg).copy()
    J[2] += problem.t * F
    return solve_banded((2, 2), J, -F * (phi.phi - problem.reference.phi))


@dataclass
class ContinuityPath:
    params: ConeParameters
    reference: PotentialProfile
    t_nodes: list[float] = field(default_factory=list)
    solutions: list[PotentialProfile] = field(default_factory=list)
    energy_trace: list[float] = field(default_factory=list)
    rejected_steps: int = 0

    @property
    def complete(self) -> bool:
        return bool(self.t_nodes) and self.t_nodes[-1] == self.params.beta

    @property
    def endpoint(self) -> PotentialProfile:
        return self.solutions[-1]


def run_continuity_path(params: ConeParameters, phi_eps: PotentialProfile, psi_eps: PotentialProfile,
                        bg: BackgroundGeometry, config: NewtonConfig = NewtonConfig(),
                        initial_step: float | None = None, min_step: float | None = None,
                        growth: float = 1.5, track_energy: bool = True) -> ContinuityPath:
    """March t from 0 to beta; raise PathFailure when the step underflows."""
    from .energies import twisted_energies

    beta, eps = params.beta, params.epsilon
    dt = beta / 32.0 if initial_step is None else initial_step
    min_step = beta * 2.0**-10 if min_step is None else min_step
    path = ContinuityPath(params, phi_eps)

    def record(t, sol):
        path.t_nodes.append(t)
        path.solutions.append(sol)
        if track_energy:
            path.energy_trace.append(twisted_energies(sol, eps, beta, bg).eps_twisted)

    record(0.0, psi_eps)
    t = 0.0
    streak = 0
    while t < beta:
        step = min(dt, beta - t)
        t_new = beta if beta - (t + step) <= 1e-12 * beta else t + step
        step = t_new - t
        current = path.solutions[-1]
        guess = current.phi
        tangent = path_tangent(TwistedProblem(t, beta, eps, phi_eps, bg), current) if t > 0 else None
        if tangent is not None:
            guess = current.phi + step * tangent
        problem = TwistedProblem(t_new, beta, eps, phi_eps, bg)
        try:
            try:
                sol = solve_continuity_step(problem, guess, config)
            except StepFailure:
                if tangent is None:
                    raise
                sol = solve_continuity_step(problem, current, config)
        except StepFailure:
            path.rejected_steps += 1
            streak = 0
            dt = 0.5 * step
            if dt < min_step:
                raise PathFailure("continuity step underflow", t, path)
            continue
        record(t_new, sol)
        t = t_new
        streak += 1
        if streak >= 2:
            dt = step * growth
            streak = 0
        else:
            dt = step
    return path


def max_principle_bound(c: float, log_base: np.ndarray, bg: BackgroundGeometry) -> float:
    """sup psi <= (1/|c|) log sup(u0'' / B) for u0'' + psi'' = B e^{|c| psi}."""
    if c >= 0.0:
        raise ValueError("the bound needs c < 0")
    return float(np.max(bg.log_u0_second - log_base)) / abs(c)


def a_priori_bound(c: float, beta: float, epsilon: float, p: float, bg: BackgroundGeometry) -> float:
    """Bound on sup psi + ||omega_psi / omega0||_p for the c < 0 problem.

    sup psi <= b by the maximum principle, and omega_psi = B e^{|c| psi}
    gives ||omega_psi / omega0||_p <= e^{|c| b} ||B / u0''||_p.
    """
    log_base = nonpositive_log_base(beta, epsilon, bg)
    b = max_principle_bound(c, log_base, bg)
    return b + np.exp(abs(c) * b) * lp_norm(np.exp(log_base - bg.log_u0_second), p, bg)


def nonpositive_log_base(beta: float, epsilon: float, bg: BackgroundGeometry) -> np.ndarray:
    """log of c_norm (|S|^2 + eps)^{beta-1} u0'' with total mass 2."""
    log_b = (beta - 1.0) * bg.log_regularized(epsilon) + bg.log_u0_second
    return log_b - np.log(bg.grid.integrate(np.exp(log_b), tails=True) / 2.0)


def solve_nonpositive(c: float, beta: float, epsilon: float, bg: BackgroundGeometry,
                      config: NewtonConfig = NewtonConfig(), log_base: np.ndarray | None = None,
                      initial_guess: np.ndarray | None = None) -> PotentialProfile:
    """u0'' + psi'' = B e^{-c psi}, c <= 0, with the maximum-principle trust region."""
    if c > 0.0:
        raise ValueError("solve_nonpositive needs c <= 0")
    if log_base is None:
        log_base = nonpositive_log_base(beta, epsilon, bg)
    if c == 0.0:
        return solve_calabi_yau(CalabiYauProblem(Density(bg.grid, np.exp(log_base))), bg)
    bound = max_principle_bound(c, log_base, bg)
    phi0 = np.zeros_like(bg.u0) if initial_guess is None else np.minimum(initial_guess, bound)
    out = _newton(phi0, log_base, c, bg, config, upper_bound=bound + 1e-8)
    return PotentialProfile.from_density(bg, out.phi, out.m, f"c={c:g}", out.history[-1], out.history)


def two_sided_constant(psi: PotentialProfile, beta: float, epsilon: float, bg: BackgroundGeometry) -> float:
    """Smallest C with u0''/C <= m_psi <= C (eps + |S|^2)^{beta-1} u0''."""
    log_m = np.log(psi.v_second)
    lower = np.max(bg.log_u0_second - log_m)
    upper = np.max(log_m - (beta - 1.0) * bg.log_regularized(epsilon) - bg.log_u0_second)
    return float(np.exp(max(lower, upper, 0.0)))


def quadratic_tail(history, count: int = 3, floor: float = 1e-11) -> float | None:
    """max r_{k+1} / r_k^2 over the last ``count`` residuals above ``floor``.

    Residuals at round-off level say nothing about the rate and are
    dropped first; None when fewer than two remain.
    """
    h = [r for r in history if r > floor][-count:]
    if len(h) < 2:
        return None
    return float(max(h[k + 1] / h[k] ** 2 for k in range(len(h) - 1)))
