from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from kcmfold.builder import build_backbone_topology, extended_backbone
from kcmfold.chain import (AtomRecord, ChainTopology, downstream_mask, forward_kinematics,
                           pairwise_distance, rotation_about_axis)
from kcmfold.exceptions import ValidationError

angles = st.floats(-10.0, 10.0, allow_nan=False)
unit_vectors = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def dihedral(a, b, c, d):
    b0, b1, b2 = a - b, c - b, d - c
    b1 = b1 / np.linalg.norm(b1)
    v = b0 - (b0 @ b1) * b1
    w = b2 - (b2 @ b1) * b1
    return np.arctan2(np.cross(b1, v) @ w, v @ w)


@given(unit_vectors, angles)
def test_rotation_matches_scipy(axis, angle):
    R = rotation_about_axis(axis, angle)
    np.testing.assert_allclose(R, Rotation.from_rotvec(angle * axis).as_matrix(), atol=1e-12)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(R @ axis, axis, atol=1e-12)


def test_rotation_rejects_bad_axis():
    with pytest.raises(ValidationError, match="unit length"):
        rotation_about_axis([0.9, 0, 0], 0.3)
    with pytest.raises(ValidationError):
        rotation_about_axis([1.0, 0], 0.3)
    with pytest.raises(ValidationError):
        rotation_about_axis([1.0, 0, 0], np.nan)


def test_protocol_chain_dimensions(protocol_chain):
    topology, _ = protocol_chain
    assert topology.n_planes == 10
    assert topology.n_joints == 22
    assert topology.n_atoms == 45
    assert sum(a.charge for a in topology.atoms) == pytest.approx(0.0, abs=1e-12)


def test_zero_position_reproduces_builder_geometry(fixture_chain):
    topology, _ = fixture_chain
    xyz = extended_backbone(topology.n_planes + 1)
    state = forward_kinematics(topology, np.zeros(topology.n_joints))
    for atom, pos in zip(topology.atoms, state.atom_positions):
        np.testing.assert_allclose(pos, xyz[atom.name], atol=1e-12)
    np.testing.assert_array_equal(state.cumulative_rotations[0], np.eye(3))


def test_explicit_hydrogen_chain_places_amide_hydrogens():
    topology = build_backbone_topology(3, hydrogens=True)
    xyz = extended_backbone(4)
    state = forward_kinematics(topology, np.zeros(topology.n_joints))
    h = topology.atom_index("H2")
    np.testing.assert_allclose(state.atom_positions[h], xyz["H2"], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=8, max_size=8))
def test_bond_lengths_and_plane_shape_are_rigid(fixture_chain, theta):
    topology, _ = fixture_chain
    ref = forward_kinematics(topology, np.zeros(8)).atom_positions
    pos = forward_kinematics(topology, np.array(theta)).atom_positions
    for a, b in topology.bonds:
        i, j = topology.atom_index(a), topology.atom_index(b)
        assert np.linalg.norm(pos[i] - pos[j]) == pytest.approx(np.linalg.norm(ref[i] - ref[j]), abs=1e-9)
    for k in (1, 2, 3):
        idx = [topology.atom_index(n) for n in (f"CA{k}", f"C{k}", f"O{k}", f"N{k + 1}", f"CA{k + 1}")]
        d_ref = np.linalg.norm(ref[idx][:, None] - ref[idx][None], axis=-1)
        d_now = np.linalg.norm(pos[idx][:, None] - pos[idx][None], axis=-1)
        np.testing.assert_allclose(d_now, d_ref, atol=1e-9)


def test_each_joint_shifts_its_own_dihedral(fixture_chain):
    topology, _ = fixture_chain
    theta = np.random.default_rng(3).uniform(-1, 1, 8)
    delta = 0.37
    for j in range(2, 7):  # joints with a full four-atom dihedral
        res = (j + 1) // 2
        if j % 2:  # phi of residue res: C(res-1) N CA C
            names = (f"C{res - 1}", f"N{res}", f"CA{res}", f"C{res}")
        else:  # psi: N CA C N(next)
            names = (f"N{res}", f"CA{res}", f"C{res}", f"N{res + 1}")
        idx = [topology.atom_index(n) for n in names]
        bumped = theta.copy()
        bumped[j - 1] += delta
        a = dihedral(*forward_kinematics(topology, theta).atom_positions[idx])
        b = dihedral(*forward_kinematics(topology, bumped).atom_positions[idx])
        change = (b - a + np.pi) % (2 * np.pi) - np.pi
        assert change == pytest.approx(delta, abs=1e-12)


def test_joint_moves_only_downstream_atoms(fixture_chain):
    topology, _ = fixture_chain
    theta = np.random.default_rng(1).uniform(-1, 1, 8)
    base = forward_kinematics(topology, theta).atom_positions
    for j in range(1, 9):
        bumped = theta.copy()
        bumped[j - 1] += 0.5
        moved = np.linalg.norm(forward_kinematics(topology, bumped).atom_positions - base, axis=1) > 1e-12
        mask = downstream_mask(topology, j)
        assert not np.any(moved & ~mask)


def test_anchor_recursion(fixture_chain):
    topology, _ = fixture_chain
    state = forward_kinematics(topology, np.linspace(-1, 1, 8))
    np.testing.assert_allclose(np.diff(state.anchors, axis=0), state.body_vectors, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(state.axis_vectors, axis=1), 1.0, atol=1e-14)
    np.testing.assert_array_equal(state.joint_points, state.anchors[:-1])


def test_conformation_validation(fixture_chain):
    topology, _ = fixture_chain
    with pytest.raises(ValidationError, match="8 dihedral angles"):
        forward_kinematics(topology, np.zeros(7))
    with pytest.raises(ValidationError, match="non-finite"):
        forward_kinematics(topology, np.full(8, np.inf))
    state = forward_kinematics(topology, np.zeros(8))
    with pytest.raises(ValidationError):
        pairwise_distance(state, 2, 2)
    assert pairwise_distance(state, 0, 1) == pytest.approx(1.458)


def _fields(topology):
    return dict(n_planes=topology.n_planes, zero_axis_vectors=topology.zero_axis_vectors.copy(),
                zero_body_vectors=topology.zero_body_vectors.copy(), atoms=topology.atoms,
                bonds=topology.bonds)


def test_topology_rejects_short_axis_naming_the_joint(fixture_chain):
    fields = _fields(fixture_chain[0])
    fields["zero_axis_vectors"][4] *= 0.9
    with pytest.raises(ValidationError, match=r"joint 5"):
        ChainTopology(**fields)


def test_topology_rejects_bad_atoms(fixture_chain):
    topology = fixture_chain[0]
    fields = _fields(topology)
    bad = AtomRecord("X", "C", "backbone-CA", 0.0, -1.0, 0.1, anchor=1)
    with pytest.raises(ValidationError, match="radius"):
        ChainTopology(**{**fields, "atoms": topology.atoms + (bad,)})
    dup = AtomRecord("CA1", "C", "backbone-CA", 0.0, 1.0, 0.1, anchor=1)
    with pytest.raises(ValidationError):
        ChainTopology(**{**fields, "atoms": topology.atoms + (dup,)})
    with pytest.raises(ValidationError, match="bonds"):
        ChainTopology(**{**fields, "bonds": (("CA1", "nope"),)})


def test_topology_equality(fixture_chain):
    topology = fixture_chain[0]
    assert topology == ChainTopology(**_fields(topology), name=topology.name)
    assert topology != build_backbone_topology(4)
