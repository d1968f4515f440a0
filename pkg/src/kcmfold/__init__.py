"""Kinetostatic compliance folding of peptide backbones with bounded QP control."""

from .chain import (AtomRecord, ChainTopology, KinematicState, forward_kinematics,
                    rotation_about_axis)
from .energetics import (EnergyBreakdown, ForceFieldParams, ForceFieldRules, atom_forces,
                         build_params, total_energy)
from .exceptions import KCMError, SingularityError, ValidationError
from .folding import (SimulationConfig, SimulationResult, audit_discretization,
                      initial_conformation, kcm_step, ods_control, simulate)
from .io import (DEFAULT_CHAIN_SPEC, FIXTURE_CHAIN_SPEC, load_chain_spec, read_chain_spec,
                 read_trajectory, save_chain_spec, write_trajectory, write_xyz_snapshot)
from .kinetostatics import TorqueField, chain_jacobian, joint_torques, torque_gradient_error
from .qp import BoxQP, QPError, lipschitz_probe, lp_feasibility_omega, solve_box_qp

__version__ = "0.1.0"

__all__ = [
    "AtomRecord", "ChainTopology", "KinematicState", "forward_kinematics", "rotation_about_axis",
    "EnergyBreakdown", "ForceFieldParams", "ForceFieldRules", "atom_forces", "build_params",
    "total_energy", "KCMError", "SingularityError", "ValidationError", "SimulationConfig",
    "SimulationResult", "audit_discretization", "initial_conformation", "kcm_step",
    "ods_control", "simulate", "DEFAULT_CHAIN_SPEC", "FIXTURE_CHAIN_SPEC", "load_chain_spec",
    "read_chain_spec", "read_trajectory", "save_chain_spec", "write_trajectory",
    "write_xyz_snapshot", "TorqueField", "chain_jacobian", "joint_torques",
    "torque_gradient_error", "BoxQP", "QPError", "lipschitz_probe", "lp_feasibility_omega",
    "solve_box_qp",
]
