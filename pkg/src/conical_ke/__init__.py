"""Smooth approximations of conical Kähler-Einstein metrics on P^1.

S^1-invariant model X = P^1, D = {0} + {inf}: regularized Monge-Ampère
solves, the twisted continuity path, energy functionals and metric-space
certificates, checked against the closed-form football metric.
"""

from .radial import (
    BackgroundGeometry,
    ConeParameters,
    Density,
    FootballOracle,
    MetricProfile,
    PotentialProfile,
    RadialGrid,
    build_background,
    cone_asymptotics_check,
    football_potential,
    lp_norm,
    ricci_coefficient,
    ricci_margin,
    twisting_profile,
    volume_ratio,
)
from .solver import (
    CalabiYauProblem,
    ContinuityPath,
    NewtonConfig,
    PathFailure,
    StepFailure,
    TwistedProblem,
    UnsolvableClassError,
    a_priori_bound,
    run_continuity_path,
    smooth_volume_form,
    smoothing_chain,
    solve_calabi_yau,
    solve_continuity_step,
    solve_nonpositive,
    solve_psi,
)

__all__ = [
    "BackgroundGeometry", "ConeParameters", "Density", "FootballOracle", "MetricProfile",
    "PotentialProfile", "RadialGrid", "build_background", "cone_asymptotics_check",
    "football_potential", "lp_norm", "ricci_coefficient", "ricci_margin", "twisting_profile",
    "volume_ratio", "CalabiYauProblem", "ContinuityPath", "NewtonConfig", "PathFailure",
    "StepFailure", "TwistedProblem", "UnsolvableClassError", "a_priori_bound", "run_continuity_path",
    "smooth_volume_form", "smoothing_chain", "solve_calabi_yau", "solve_continuity_step",
    "solve_nonpositive", "solve_psi",
]
