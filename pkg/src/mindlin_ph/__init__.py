"""Port-Hamiltonian Mindlin plate: discretization, passive control, simulation."""
from .controllability import ControllableRealization, decompose, verify_constraints
from .discretize import DiscretePHSystem, StaggeredGrid, assemble, build_grid, build_plate
from .plate import PlateParameters, build_constitutive, build_interconnection
from .simulation import (
    CouplingMap,
    ReferenceSchedule,
    build_coupling,
    closed_loop_matrix,
    midpoint_step,
    perfect_feedback,
    simulate_closed_loop,
)
from .synthesis import (
    PassiveController,
    SynthesisConfig,
    SynthesisError,
    luenberger_obsf,
    synthesize,
)

__all__ = [
    "ControllableRealization",
    "CouplingMap",
    "DiscretePHSystem",
    "PassiveController",
    "PlateParameters",
    "ReferenceSchedule",
    "StaggeredGrid",
    "SynthesisConfig",
    "SynthesisError",
    "assemble",
    "build_constitutive",
    "build_coupling",
    "build_grid",
    "build_interconnection",
    "build_plate",
    "closed_loop_matrix",
    "decompose",
    "luenberger_obsf",
    "midpoint_step",
    "perfect_feedback",
    "simulate_closed_loop",
    "synthesize",
    "verify_constraints",
]
