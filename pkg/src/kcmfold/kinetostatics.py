"""Generalized link wrenches, the chain Jacobian and joint torques.

Links are enumerated 1..2N (link ``m`` is the body between joints ``m`` and
``m + 1``); the fixed base link 0 gets no rows.  ``F`` and ``J`` are
link-major with the three force rows before the three moment rows, so both
have ``6 * 2N`` rows.  Each link's reference point is its anchor ``A_m``,
which for a peptide plane is the plane's amide nitrogen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainTopology, KinematicState, forward_kinematics
from .energetics import ForceFieldParams, atom_forces, total_energy


@dataclass(frozen=True)
class GeneralizedForces:
    vector: np.ndarray  # (6 * n_links,)
    reference_points: np.ndarray  # (n_links, 3)

    def wrench(self, link: int) -> tuple[np.ndarray, np.ndarray]:
        """(force, moment) of 1-based ``link``."""
        block = self.vector[6 * (link - 1): 6 * link]
        return block[:3], block[3:]


@dataclass(frozen=True)
class ChainJacobian:
    matrix: np.ndarray  # (6 * n_links, n_joints)
    reference_points: np.ndarray


def link_reference_points(state: KinematicState) -> np.ndarray:
    return state.anchors[1:]


def assemble_generalized_forces(state: KinematicState, forces: np.ndarray,
                                topology: ChainTopology,
                                reference_points: np.ndarray | None = None) -> GeneralizedForces:
    n_links = topology.n_joints
    if reference_points is None:
        reference_points = link_reference_points(state)
    links = state.atom_links
    moving = links > 0
    r = state.atom_positions[moving]
    f = forces[moving]
    idx = links[moving] - 1
    arm = r - reference_points[idx]

    wrench = np.zeros((n_links, 6))
    np.add.at(wrench[:, :3], idx, f)
    np.add.at(wrench[:, 3:], idx, np.cross(arm, f))
    return GeneralizedForces(wrench.reshape(-1), np.array(reference_points))


def chain_jacobian(state: KinematicState, topology: ChainTopology,
                   reference_points: np.ndarray | None = None) -> ChainJacobian:
    """Revolute-joint Jacobian mapping joint rates to link twists.

    Column ``j`` is ``(u_j x (p_m - A_{j-1}), u_j)`` on every link ``m >= j``
    and zero on upstream links.
    """
    n = topology.n_joints
    if reference_points is None:
        reference_points = link_reference_points(state)
    J = np.zeros((n, 6, n))
    pivots = state.joint_points
    for j in range(n):
        u = state.axis_vectors[j]
        arms = reference_points[j:] - pivots[j]
        J[j:, :3, j] = np.cross(u, arms)
        J[j:, 3:, j] = u
    return ChainJacobian(J.reshape(6 * n, n), np.array(reference_points))


def joint_torques(state: KinematicState, forces: np.ndarray, topology: ChainTopology) -> np.ndarray:
    """``tau_j = u_j . sum_{i downstream of j} (r_i - A_{j-1}) x F_i``.

    Computed with suffix sums over links, without forming ``J``.
    """
    n = topology.n_joints
    links = state.atom_links
    r = state.atom_positions
    per_link_f = np.zeros((n + 1, 3))
    per_link_m = np.zeros((n + 1, 3))
    np.add.at(per_link_f, links, forces)
    np.add.at(per_link_m, links, np.cross(r, forces))
    # suffix sums: index m holds the total over links >= m
    f_down = np.cumsum(per_link_f[::-1], axis=0)[::-1]
    m_down = np.cumsum(per_link_m[::-1], axis=0)[::-1]
    pivots = state.joint_points
    moment = m_down[1:] - np.cross(pivots, f_down[1:])
    return np.einsum("ja,ja->j", state.axis_vectors, moment)


def joint_torques_via_jacobian(state: KinematicState, forces: np.ndarray,
                               topology: ChainTopology) -> np.ndarray:
    F = assemble_generalized_forces(state, forces, topology)
    J = chain_jacobian(state, topology)
    return J.matrix.T @ F.vector


@dataclass(frozen=True)
class Evaluation:
    state: KinematicState
    forces: np.ndarray
    torques: np.ndarray

    @property
    def tau_inf(self) -> float:
        return float(np.max(np.abs(self.torques)))


class TorqueField:
    """Callable ``theta -> tau(theta)`` for a fixed chain and force field."""

    def __init__(self, topology: ChainTopology, params: ForceFieldParams):
        self.topology = topology
        self.params = params

    def evaluate(self, theta) -> Evaluation:
        state = forward_kinematics(self.topology, theta)
        forces = atom_forces(state, self.params)
        return Evaluation(state, forces, joint_torques(state, forces, self.topology))

    def energy(self, theta):
        return total_energy(forward_kinematics(self.topology, theta), self.params)

    def __call__(self, theta) -> np.ndarray:
        return self.evaluate(theta).torques


def torque_gradient_error(field_: TorqueField, theta, step: float = 1e-6) -> float:
    """``max_j |tau_j + dG/dtheta_j| / max(1, |tau|_inf)`` with central differences."""
    theta = np.asarray(theta, dtype=float)
    tau = field_(theta)
    grad = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = step
        grad[j] = (field_.energy(theta + e).total - field_.energy(theta - e).total) / (2 * step)
    return float(np.max(np.abs(tau + grad)) / max(1.0, float(np.max(np.abs(tau)))))
