"""Articulated arm and free-body simulation."""
from armada.simcore.dynamics import (SingularMassMatrixError, arm_energy, bias_forces, forward_dynamics,
                                     inverse_dynamics, mass_matrix)
from armada.simcore.world import (DrConfig, DrSample, RigidBodyState, SimConfig, SimulationError, Simulator,
                                  WorldState, box_body, bump_body, card_body, cube_body, make_world, randomize,
                                  sphere_body, step, table_body, trajectory_csv, world_energy)

__all__ = [
    "SingularMassMatrixError", "arm_energy", "bias_forces", "forward_dynamics", "inverse_dynamics", "mass_matrix",
    "DrConfig", "DrSample", "RigidBodyState", "SimConfig", "SimulationError", "Simulator", "WorldState",
    "box_body", "bump_body", "card_body", "cube_body", "make_world", "randomize", "sphere_body", "step",
    "table_body", "trajectory_csv", "world_energy",
]
