import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conical_ke.families import bump_potential, legendre_potential, random_legendre_coeffs
from conical_ke.radial import ConeParameters, Density, RadialGrid, build_background, football_potential
from conical_ke.solver import (
    CalabiYauProblem,
    NewtonConfig,
    PathFailure,
    StepFailure,
    TwistedProblem,
    UnsolvableClassError,
    max_principle_bound,
    nonpositive_log_base,
    quadratic_tail,
    run_continuity_path,
    smooth_volume_form,
    smoothing_chain,
    solve_calabi_yau,
    solve_continuity_step,
    solve_nonpositive,
    two_sided_constant,
)


def _orders(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])


def test_calabi_yau_manufactured_order():
    errors = []
    for n in (2048, 4096, 8192):
        bg = build_background(RadialGrid(n))
        exact = bump_potential(bg, 0.1)
        sol = solve_calabi_yau(CalabiYauProblem(Density(bg.grid, exact.v_second), "pole"), bg)
        errors.append(np.max(np.abs(sol.phi - exact.phi)))
        assert sol.residual < 1e-9
    assert np.all(_orders(errors) >= 3.5)


def test_calabi_yau_recovers_football(bg):
    fb = football_potential(0.5, bg.grid)
    sol = solve_calabi_yau(CalabiYauProblem(Density(bg.grid, fb.v_beta_second), "pole"), bg)
    assert np.max(np.abs(sol.phi - fb.phi_beta + fb.phi_beta[0])) < 1e-7
    assert sol.normalization_tag == "pole"


def test_calabi_yau_rejects_wrong_mass(bg):
    with pytest.raises(UnsolvableClassError):
        solve_calabi_yau(CalabiYauProblem(Density(bg.grid, 1.01 * bg.u0_second)), bg)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_calabi_yau_mean_normalization_and_roundtrip(bg_coarse, seed):
    exact = legendre_potential(bg_coarse, random_legendre_coeffs(np.random.default_rng(seed), constant=False))
    sol = solve_calabi_yau(CalabiYauProblem(Density(bg_coarse.grid, exact.v_second)), bg_coarse)
    w = bg_coarse.grid.quadrature_weights * bg_coarse.u0_second
    assert abs(w @ sol.phi) < 1e-12
    d = sol.phi - exact.phi
    assert np.ptp(d) < 1e-5


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4])
def test_smooth_volume_form_mass(bg, eps):
    eta = smooth_volume_form(0.5, eps, bg)
    assert eta.mass == pytest.approx(4 * np.pi, rel=1e-12)
    with pytest.raises(ValueError):
        smooth_volume_form(0.5, 0.0, bg)


@pytest.fixture(scope="module")
def chain(bg):
    return smoothing_chain(ConeParameters(0.5, epsilon=1e-2), bg)


def test_reference_normalization(bg, chain):
    beta, eps = 0.5, 1e-2
    phi = chain.phi_eps
    log_w = -beta * phi.phi + (beta - 1) * bg.log_regularized(eps) + bg.log_u0_second
    assert 2 * np.pi * bg.grid.integrate(np.exp(log_w), tails=True) == pytest.approx(4 * np.pi, rel=1e-12)
    assert chain.psi_eps.normalization_tag == "t0-limit"


def test_small_t_step_matches_psi(bg, chain):
    problem = TwistedProblem(1e-6, 0.5, 1e-2, chain.phi_eps, bg)
    sol = solve_continuity_step(problem, chain.psi_eps)
    assert np.max(np.abs(sol.phi - chain.psi_eps.phi)) < 1e-5


def test_two_sided_constant_is_tight(bg, chain):
    c1 = two_sided_constant(chain.psi_eps, 0.5, 1e-2, bg)
    m = chain.psi_eps.v_second
    assert np.all(bg.u0_second / c1 <= m * (1 + 1e-12))
    assert np.all(m <= c1 * np.exp(-0.5 * bg.log_regularized(1e-2)) * bg.u0_second * (1 + 1e-12))
    assert 1.0 <= c1 < 50.0


def test_continuity_path_reaches_beta(bg, chain):
    path = run_continuity_path(chain.params, chain.phi_eps, chain.psi_eps, bg)
    assert path.complete
    assert path.t_nodes[0] == 0.0 and path.t_nodes[-1] == 0.5
    assert np.all(np.diff(path.t_nodes) > 0)
    assert len(path.energy_trace) == len(path.t_nodes)
    for sol in path.solutions[1:]:
        assert sol.residual < 1e-9


def test_continuity_failure_reports_last_t(bg, chain):
    with pytest.raises(PathFailure) as info:
        run_continuity_path(chain.params, chain.phi_eps, chain.psi_eps, bg,
                            NewtonConfig(max_iterations=1), track_energy=False)
    assert info.value.last_t == 0.0


def test_twisted_problem_validation(bg, chain):
    with pytest.raises(ValueError):
        TwistedProblem(0.6, 0.5, 1e-2, chain.phi_eps, bg)
    with pytest.raises(ValueError):
        solve_continuity_step(TwistedProblem(0.0, 0.5, 1e-2, chain.phi_eps, bg), chain.psi_eps)
    with pytest.raises(StepFailure):
        solve_continuity_step(TwistedProblem(0.25, 0.5, 1e-2, chain.phi_eps, bg), -1e3 * bg.u0)


def test_newton_tail_is_quadratic(bg, chain):
    sol = solve_continuity_step(TwistedProblem(0.5, 0.5, 1e-2, chain.phi_eps, bg), chain.psi_eps)
    c = quadratic_tail(sol.newton_history)
    assert c is not None and c <= 100.0


def test_quadratic_tail_helper():
    assert quadratic_tail([1e-1, 1e-2, 1e-4, 1e-8]) == pytest.approx(1.0)
    assert quadratic_tail([1e-1, 1e-13]) is None
    # linear convergence inflates the constant like 1 / r_k
    assert quadratic_tail([1e-2, 1e-3, 1e-4]) == pytest.approx(100.0)


def test_nonpositive_manufactured_order():
    errors = []
    for n in (2048, 4096, 8192):
        bg = build_background(RadialGrid(n))
        exact = bump_potential(bg, 0.1)
        # u0'' + psi'' = B e^{psi} with B chosen so that the bump solves it
        log_base = np.log(exact.v_second) - exact.phi
        sol = solve_nonpositive(-1.0, 0.5, 1.0, bg, log_base=log_base)
        errors.append(np.max(np.abs(sol.phi - exact.phi)))
    assert errors[-1] < 1e-8
    assert np.all(_orders(errors) >= 3.5)


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4])
def test_nonpositive_respects_max_principle(bg, eps):
    sol = solve_nonpositive(-1.0, 0.5, eps, bg)
    bound = max_principle_bound(-1.0, nonpositive_log_base(0.5, eps, bg), bg)
    assert sol.phi.max() <= bound + 1e-8
    assert sol.residual < 1e-9


def test_nonpositive_c_zero_is_calabi_yau(bg):
    sol = solve_nonpositive(0.0, 0.5, 0.1, bg)
    assert sol.normalization_tag == "mean"
    with pytest.raises(ValueError):
        solve_nonpositive(0.5, 0.5, 0.1, bg)
    with pytest.raises(ValueError):
        max_principle_bound(0.0, bg.log_u0_second, bg)
