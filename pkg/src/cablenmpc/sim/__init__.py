from .dynamics import SystemParams
from .engine import (SimLog, SimulationFault, TeamCommand, TeamController, WorldState,
                     cable_tensions, equilibrium_world, run_scenario, step, world_derivative)

__all__ = [
    "SimLog",
    "SimulationFault",
    "SystemParams",
    "TeamCommand",
    "TeamController",
    "WorldState",
    "cable_tensions",
    "equilibrium_world",
    "run_scenario",
    "step",
    "world_derivative",
]
