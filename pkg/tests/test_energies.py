import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conical_ke import energies as en
from conical_ke.families import bump_potential, random_potentials, scaled_potential
from conical_ke.radial import RadialGrid, build_background, football_potential, zero_potential
from conical_ke.solver import ContinuityPath

# 4 pi int_0^1 log(1 + 1/(x(1-x))) dx, mpmath at 30 digits
C3_ORACLE = 27.0433913394375621838


@pytest.fixture(scope="module")
def potentials(bg):
    return random_potentials(7, 6, bg)


def test_c3_oracle(bg):
    assert en.c3_constant() == pytest.approx(C3_ORACLE, rel=1e-13)
    assert en.c3_constant(bg) == pytest.approx(C3_ORACLE, rel=1e-11)


def test_zero_potential_has_zero_energies(bg):
    path = en.PotentialPath(zero_potential(bg), bg)
    assert en.k_energy_path(path) == 0.0
    assert en.j_chi(path) == 0.0
    assert en.j0(zero_potential(bg), bg) == 0.0


def test_path_rules(bg, potentials):
    phi = potentials[0]
    with pytest.raises(ValueError):
        en.PotentialPath(phi, bg, "cubic")
    for rule in en.PATH_RULES:
        path = en.PotentialPath(phi, bg, rule)
        p0, _, m0 = path.at(0.0)
        p1, _, m1 = path.at(1.0)
        assert np.max(np.abs(p0)) == 0.0 and np.allclose(m0, bg.u0_second)
        assert np.allclose(p1, phi.phi) and np.allclose(m1, phi.v_second)
    # the detour genuinely leaves the segment
    lin, det = en.PotentialPath(phi, bg).at(0.5)[0], en.PotentialPath(phi, bg, "detour").at(0.5)[0]
    assert np.max(np.abs(lin - det)) > 1e-3


def test_dual_routes_agree(bg, potentials):
    for phi in potentials:
        rep = en.energy_report(phi, bg, 0.1, 0.5)
        assert rep.J_chi_eps_closed == pytest.approx(rep.J_chi_eps_path, rel=1e-6, abs=1e-9)
        assert rep.J_chi_closed == pytest.approx(rep.J_chi, rel=1e-6, abs=1e-9)
        assert rep.matching_variant == "b"


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.9])
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_dual_route_on_footballs(bg, beta, eps):
    fb = football_potential(beta, bg.grid).profile()
    path = en.PotentialPath(fb, bg)
    assert en.j_chi_eps_closed(fb, bg, eps) == pytest.approx(en.j_chi_eps_path(path, eps), rel=1e-9)


@pytest.mark.parametrize("rule", ["quadratic", "detour"])
def test_path_independence(bg, potentials, rule):
    for phi in potentials:
        lin, alt = en.PotentialPath(phi, bg), en.PotentialPath(phi, bg, rule)
        assert en.k_energy_path(alt) == pytest.approx(en.k_energy_path(lin), rel=1e-6, abs=1e-8)
        assert en.j_chi_eps_path(alt, 0.1) == pytest.approx(en.j_chi_eps_path(lin, 0.1), rel=1e-6, abs=1e-8)
        assert en.j_chi(alt) == pytest.approx(en.j_chi(lin), rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("beta", [0.5, 0.75])
def test_football_cone_curvature_gap(bg, beta):
    # on a conical potential the grid Ricci form misses the point masses
    # 2 pi (1 - beta) at the poles; the entropy formula keeps them
    fb = football_potential(beta, bg.grid).profile()
    gap = en.k_energy_closed(fb, bg) - en.k_energy_path(en.PotentialPath(fb, bg))
    cone = -2 * np.pi * (1 - beta) * (fb.phi[0] + fb.phi[-1])
    assert gap == pytest.approx(cone, rel=1e-8)


def test_football_energy_self_convergence(bg):
    fine = build_background(RadialGrid(16384))
    vals = []
    for b in (bg, fine):
        path = en.PotentialPath(football_potential(0.5, b.grid).profile(), b)
        vals.append((en.k_energy_path(path), en.j_chi(path)))
    assert vals[0][0] == pytest.approx(vals[1][0], abs=1e-7)
    assert vals[0][1] == pytest.approx(vals[1][1], abs=1e-9)
    assert vals[1][1] == pytest.approx(-4 * np.pi, abs=1e-9)
    assert vals[1][0] == pytest.approx(4 * np.pi, abs=1e-8)


def test_regularization_gap(bg, potentials):
    c3 = en.c3_constant()
    for phi in potentials:
        limit = en.twisted_energies(phi, 1.0, 0.5, bg).limit_twisted
        for eps in (1.0, 1e-2, 1e-4):
            assert en.twisted_energies(phi, eps, 0.5, bg).eps_twisted >= limit - c3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_j0_nonnegative(bg_coarse, seed):
    for phi in random_potentials(seed, 2, bg_coarse):
        assert en.j0(phi, bg_coarse) >= -1e-12


def test_properness_scan(bg):
    base = bump_potential(bg, 0.3)
    family = [scaled_potential(base, a, bg) for a in np.linspace(0.0, 3.0, 7)]
    scan = en.properness_scan(family, 0.5, bg)
    assert np.all(np.diff(scan.j0) > 0)
    assert scan.slope >= 0.0
    assert np.all(scan.energy >= scan.slope * scan.j0 - scan.offset - 1e-12)
    assert scan.min_j0 == 0.0


def test_monotonicity_check_flags_increase(bg):
    path = ContinuityPath(params=None, reference=None, t_nodes=[0.0, 0.1, 0.2, 0.3],
                          energy_trace=[1.0, 0.5, 0.5 + 1e-10, 0.6])
    cert = en.monotonicity_check(path)
    assert not cert.monotone
    assert [v[0] for v in cert.violations] == [3]


def test_returns_plain_floats(bg, potentials):
    rep = en.energy_report(potentials[0], bg, 0.1, 0.5)
    assert all(type(v) is float for v in vars(rep).values())


@pytest.mark.parametrize("c", [-1.3, 0.7])
def test_constant_shift_invariance(bg, potentials, c):
    for phi in potentials[:3]:
        base, moved = en.PotentialPath(phi, bg), en.PotentialPath(phi.shifted(c), bg)
        assert en.k_energy_path(moved) == pytest.approx(en.k_energy_path(base), abs=1e-8)
        assert en.j_chi_eps_path(moved, 0.1) == pytest.approx(en.j_chi_eps_path(base, 0.1), abs=1e-8)
        assert en.j_chi(moved) == pytest.approx(en.j_chi(base), abs=1e-8)
        assert en.j0(phi.shifted(c), bg) == pytest.approx(en.j0(phi, bg), abs=1e-8)


def test_regularized_twisting_approaches_limit(bg, potentials):
    path = en.PotentialPath(potentials[1], bg)
    limit = en.j_chi(path)
    gaps = [abs(en.j_chi_eps_path(path, eps) - limit) for eps in (1.0, 1e-2, 1e-4, 1e-6)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
