"""Shape-based external force detection and estimation for elastic rods."""

from .core import (
    RodState,
    StiffnessTorques,
    augment_gravity,
    compute_edges,
    curvature_binormal,
    elastic_energy,
    internal_stiffness_torques,
)
from .estimator import (
    DisturbanceEstimate,
    EstimatorConfig,
    SectionLabeling,
    classify_sections,
    compute_metrics,
    condition_a,
    estimate_section_forces,
    resolve_disturbance,
    run_estimation,
    solve_window_force,
)
from .simulator import (
    AppliedForce,
    Clamp,
    EquilibriumResult,
    SimScenario,
    SimSession,
    SolverParams,
    clamp_reactions,
    hanging_wire_scenario,
    relax_to_equilibrium,
)
from .smoothing import SmoothingParams, resample, smooth

__version__ = "0.1.0"

__all__ = [
    "AppliedForce",
    "Clamp",
    "DisturbanceEstimate",
    "EquilibriumResult",
    "EstimatorConfig",
    "RodState",
    "SectionLabeling",
    "SimScenario",
    "SimSession",
    "SmoothingParams",
    "SolverParams",
    "StiffnessTorques",
    "augment_gravity",
    "clamp_reactions",
    "classify_sections",
    "compute_edges",
    "compute_metrics",
    "condition_a",
    "curvature_binormal",
    "elastic_energy",
    "estimate_section_forces",
    "hanging_wire_scenario",
    "internal_stiffness_torques",
    "relax_to_equilibrium",
    "resample",
    "resolve_disturbance",
    "run_estimation",
    "smooth",
    "solve_window_force",
]
