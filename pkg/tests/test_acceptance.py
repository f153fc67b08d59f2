"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Heavy runs (pipeline, continuity, energies) are shared through module
fixtures.  The lines are repeated in the terminal summary.
"""

import json

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from conical_ke import experiments as ex
from conical_ke.cli import main
from conical_ke.config import ExperimentConfig
from conical_ke.families import bump_potential
from conical_ke.radial import (
    ConeParameters,
    Density,
    RadialGrid,
    build_background,
    lp_norm,
    volume_ratio,
)
from conical_ke.solver import (
    CalabiYauProblem,
    a_priori_bound,
    solve_calabi_yau,
    solve_nonpositive,
)

SCHEDULE = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
CONTINUITY_BETAS = (0.5, 0.75)
CONTINUITY_EPS = (1.0, 1e-1, 1e-3)


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def orders(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])


@pytest.fixture(scope="module")
def default_config():
    return ExperimentConfig()


@pytest.fixture(scope="module")
def pipeline(default_config):
    return ex.cmd_pipeline(default_config)


@pytest.fixture(scope="module")
def continuity():
    return {b: ex.cmd_continuity(ExperimentConfig(beta=b, epsilon_schedule=CONTINUITY_EPS))
            for b in CONTINUITY_BETAS}


@pytest.fixture(scope="module")
def energies(default_config):
    return ex.cmd_energies(default_config)


def test_criterion_01_oracle_residual(default_config):
    report = ex.cmd_oracle_check(default_config)
    worst = max(r["residual"] for r in report.rows)
    betas = [r["beta"] for r in report.rows]
    assert betas == [0.1, 0.25, 0.5, 0.75, 1.0]
    verdict(1, "football residual < 1e-10", worst < 1e-10, f"max residual {worst:.2e}")


def test_criterion_02_convergence_to_oracle(pipeline):
    d = [r["oracle_distance"] for r in pipeline.details["per_epsilon"]]
    monotone = all(b <= a for a, b in zip(d, d[1:]))
    ok = monotone and d[-1] < 1e-2
    verdict(2, "sup|psi_eps - phi_beta| decreasing and < 1e-2 at eps = 1e-4", ok,
            "distances " + ", ".join(f"{v:.3g}" for v in d))


def test_criterion_03_ricci_certificate(pipeline, continuity):
    tol = pipeline.details["curvature_tolerance"]
    margins = [r["ricci_margin"] for r in pipeline.rows]
    endpoint = []
    for rep in continuity.values():
        margins += [r["ricci_margin_min"] for r in rep.rows]
        endpoint += [r["endpoint_ricci_margin"] for r in rep.rows]
    worst = min(margins + endpoint)
    verdict(3, "Ricci margin >= -10 h^2 incl. continuity endpoints", worst >= -tol,
            f"worst margin {worst:.2e}, tolerance {tol:.2e}")


def test_criterion_04_two_sided_bounds(pipeline):
    c1 = pipeline.details["C1"]
    assert [r["epsilon"] for r in pipeline.rows] == list(SCHEDULE)
    verdict(4, "single C1 < 50 over the schedule", c1 < 50.0, f"C1 = {c1:.4f}")


def test_criterion_05_diameter(pipeline):
    d = pipeline.details
    round_ok = abs(d["round_diameter"] / np.pi - 1) <= 1e-2
    ball_ok = abs(d["oracle_diameter"] / (np.pi * np.sqrt(2)) - 1) <= 1e-2
    worst = max(r["diameter_hi"] for r in pipeline.rows)
    ok = round_ok and ball_ok and worst <= d["diameter_bound"]
    verdict(5, "round = pi, football = pi sqrt 2 (1%), psi_eps <= 2 pi / sqrt beta", ok,
            f"round {d['round_diameter']:.6f}, football {d['oracle_diameter']:.6f}, "
            f"max psi {worst:.4f} <= {d['diameter_bound']:.4f}")


def test_criterion_06_gh_convergence(pipeline):
    g = [r["gh_distortion"] for r in pipeline.rows]
    strict = all(b < a for a, b in zip(g, g[1:]))
    ok = strict and g[-1] < 1e-2
    verdict(6, "GH distortion strictly decreasing and < 1e-2 at eps = 1e-4", ok,
            "distortion " + ", ".join(f"{v:.3g}" for v in g))


def test_criterion_07_energy_identities(energies):
    d = energies.details
    variant = d["k_energy_matching_variant"]
    ok = (d["dual_route_max_gap"] <= 1e-6 and d["path_independence_max_gap"] <= 1e-6
          and len(variant) == 1 and variant != ["None"])
    verdict(7, "dual route, path independence, one K-energy variant", ok,
            f"dual gap {d['dual_route_max_gap']:.1e}, path gap {d['path_independence_max_gap']:.1e}, "
            f"variant {variant}")


def test_criterion_08_regularization_gap(energies):
    d = energies.details
    ok = len(energies.rows) == 100 and d["regularization_violations"] == 0
    worst = min(r["regularization_margin"] for r in energies.rows)
    verdict(8, "E_eps >= E_limit - C3 on 100 potentials", ok,
            f"violations {d['regularization_violations']}, min margin {worst:.3f}, C3 {d['C3']:.10f}")


def test_criterion_09_monotone_twisted_energy(continuity):
    worst = max(r["max_energy_increase"] for rep in continuity.values() for r in rep.rows)
    ok = all(rep.verdicts["energy_monotone"] for rep in continuity.values())
    verdict(9, "twisted energy non-increasing along every path", ok,
            f"largest increment {worst:.2e}")


def test_criterion_10_solver_orders(continuity):
    errors = []
    for n in (2048, 4096, 8192):
        bg = build_background(RadialGrid(n))
        exact = bump_potential(bg, 0.1)
        sol = solve_calabi_yau(CalabiYauProblem(Density(bg.grid, exact.v_second), "pole"), bg)
        errors.append(float(np.max(np.abs(sol.phi - exact.phi))))
    cy = orders(errors)
    tails = [r["newton_tail_constant"] for rep in continuity.values() for r in rep.rows]
    quadratic = all(t is not None and t <= 100.0 for t in tails)
    ok = bool(np.all(cy >= 3.5)) and quadratic
    verdict(10, "Calabi-Yau order >= 3.5, quadratic Newton tail", ok,
            f"orders {cy.round(2).tolist()}, tail constants <= {max(t for t in tails if t is not None):.2f}")


def test_criterion_11_nonpositive_branch(bg):
    errors = []
    for n in (2048, 4096, 8192):
        b = build_background(RadialGrid(n))
        exact = bump_potential(b, 0.1)
        sol = solve_nonpositive(-1.0, 0.5, 1.0, b, log_base=np.log(exact.v_second) - exact.phi)
        errors.append(float(np.max(np.abs(sol.phi - exact.phi))))
    rates = orders(errors)
    p0 = ConeParameters(0.5).lp_exponent
    limit = a_priori_bound(-1.0, 0.5, 1e-300, p0, bg)
    observed, bounded = [], True
    for eps in SCHEDULE:
        psi = solve_nonpositive(-1.0, 0.5, eps, bg)
        value = psi.phi.max() + lp_norm(volume_ratio(psi, bg), p0, bg)
        observed.append(value)
        bounded &= value <= a_priori_bound(-1.0, 0.5, eps, p0, bg) <= limit
    ok = bool(np.all(rates >= 3.5)) and bounded
    verdict(11, "c = -1 manufactured order, uniform sup + L^p bound", ok,
            f"orders {rates.round(2).tolist()}, observed max {max(observed):.4f} <= {limit:.4f}")


def test_criterion_12_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"grid_size": 2048, "distance_grid": 64, "sample_grid": 8,
                               "potentials": 20, "epsilon_schedule": [1.0, 0.1, 0.01]}))
    identical = []
    for command in ("pipeline", "continuity", "energies", "oracle-check"):
        outs = [tmp_path / f"{command}-{k}" for k in range(2)]
        codes = [main([command, "--config", str(cfg), "--out", str(o), "--seed", "5"]) for o in outs]
        assert codes[0] == codes[1]
        a, b = ((o / f"{command}.csv").read_bytes() for o in outs)
        identical.append(a == b)
    verdict(12, "byte-identical CSVs on repeated runs", all(identical),
            f"{sum(identical)}/4 commands identical")
