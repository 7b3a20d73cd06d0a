"""Resilient distributed H-infinity observer networks.

A library plus batch CLI that designs networks of coupled plant observers
with attack-detection feedback, simulates them against biasing attacks
injected at individual nodes, and verifies the convergence and disturbance
attenuation guarantees of the design on the resulting traces.
"""

from ._accel import NUMBA_ENABLED
from .attack import AttackShaper, AttackSignal, eval_attack, make_shaper
from .designer import DesignArtifacts, TimeGrid, design, find_min_gamma
from .errors import (
    DefinitenessError,
    DimensionError,
    DivergenceError,
    InfeasibilityError,
    IntegrationError,
    ParameterError,
    ResobsError,
    ScenarioError,
)
from .metrics import build_report
from .network import Edge, InterconnectionMatrices, Topology, build_interconnection
from .plant import (
    DisturbanceRealization,
    MatrixSchedule,
    PlantModel,
    eval_measurement,
    eval_plant_derivative,
)
from .scenario import (
    Scenario,
    build_attacks,
    build_disturbances,
    build_system,
    load_scenario,
    scenario_to_toml,
)
from .simulator import SimTrace, simulate, simulate_error_system_oracle

__all__ = [
    "AttackShaper",
    "AttackSignal",
    "DefinitenessError",
    "DesignArtifacts",
    "DimensionError",
    "DisturbanceRealization",
    "DivergenceError",
    "Edge",
    "InfeasibilityError",
    "IntegrationError",
    "InterconnectionMatrices",
    "MatrixSchedule",
    "NUMBA_ENABLED",
    "ParameterError",
    "PlantModel",
    "ResobsError",
    "Scenario",
    "ScenarioError",
    "SimTrace",
    "TimeGrid",
    "Topology",
    "build_attacks",
    "build_disturbances",
    "build_interconnection",
    "build_report",
    "build_system",
    "design",
    "eval_attack",
    "eval_measurement",
    "eval_plant_derivative",
    "find_min_gamma",
    "load_scenario",
    "make_shaper",
    "scenario_to_toml",
    "simulate",
    "simulate_error_system_oracle",
    "__version__",
]

__version__ = "0.1.0"
