"""Numerical laboratory for |u_t|^(p-2) u_t = Δ_p u: evolution, ground states and regularity probes."""

from .core import (
    CylinderSelection,
    Field,
    Grid,
    NonFiniteField,
    PExponent,
    SpaceTimeCylinder,
    Trajectory,
    cylinder_nodes,
    read_snapshot,
    write_snapshot,
)
from .operators import VectorField, gradient, p_laplacian, pde_residual, phi_inverse, phi_of
from .evolution import (
    ConvergenceError,
    EvolutionConfig,
    StepRejected,
    evolve,
    exact_barrier,
    exact_separable,
    stable_dt,
    step_explicit,
    step_implicit,
)
from .eigen import GroundState, ground_state, rayleigh_quotient, shooting_lambda_1d
from .analysis import (
    BarrierConstants,
    ModulusReport,
    barrier_constants,
    comparison_check,
    largetime_experiment,
    lip_modulus,
    loglip_modulus,
    modulus_report,
    time_holder_via_barrier,
)
from .config import ExperimentConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "BarrierConstants",
    "ConvergenceError",
    "CylinderSelection",
    "EvolutionConfig",
    "ExperimentConfig",
    "Field",
    "Grid",
    "GroundState",
    "ModulusReport",
    "NonFiniteField",
    "PExponent",
    "SpaceTimeCylinder",
    "StepRejected",
    "Trajectory",
    "VectorField",
    "barrier_constants",
    "comparison_check",
    "cylinder_nodes",
    "evolve",
    "exact_barrier",
    "exact_separable",
    "gradient",
    "ground_state",
    "largetime_experiment",
    "lip_modulus",
    "loglip_modulus",
    "modulus_report",
    "p_laplacian",
    "parse_config",
    "pde_residual",
    "phi_inverse",
    "phi_of",
    "rayleigh_quotient",
    "read_snapshot",
    "shooting_lambda_1d",
    "stable_dt",
    "step_explicit",
    "step_implicit",
    "time_holder_via_barrier",
    "write_snapshot",
]
