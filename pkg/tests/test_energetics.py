from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from kcmfold.chain import forward_kinematics
from kcmfold.energetics import (COULOMB_CONSTANT, ForceFieldParams, ForceFieldRules, atom_forces,
                                bond_separation, build_params, dielectric_from_relative,
                                electrostatic_energy, total_energy, vdw_energy)
from kcmfold.exceptions import SingularityError, ValidationError

# Term-by-term sum over the ideal extended 3-plane geometry, computed by a
# separate script (networkx bond graph, plain Python loops) and frozen here.
FIXTURE_ZERO_ENERGY = -11.737682461163997
FIXTURE_ZERO_ELEC = -19.904942686551326


def two_atoms(q=(1.0, -1.0), radii=(1.0, 1.5), depths=(0.2, 0.05), eps_r=1.0):
    return ForceFieldParams.uniform(q, radii, depths, dielectric=dielectric_from_relative(eps_r))


def test_regression_energy_at_zero_position(fixture_chain):
    topology, params = fixture_chain
    e = total_energy(forward_kinematics(topology, np.zeros(8)), params)
    assert e.total == pytest.approx(FIXTURE_ZERO_ENERGY, rel=1e-12)
    assert e.elec == pytest.approx(FIXTURE_ZERO_ELEC, rel=1e-12)
    assert e.total == e.elec + e.vdw


def test_coulomb_pair_closed_form():
    params = two_atoms(q=(0.5, -0.8), eps_r=4.0)
    r = np.array([[0.0, 0, 0], [0, 3.0, 0]])
    assert electrostatic_energy(r, params) == pytest.approx(COULOMB_CONSTANT / 4.0 * 0.5 * -0.8 / 3.0)


def test_each_pair_counted_once():
    params = ForceFieldParams.uniform([1.0, 1.0, 1.0], [1, 1, 1], [0.1, 0.1, 0.1])
    r = np.array([[0.0, 0, 0], [2.0, 0, 0], [0, 5.0, 0]])
    d = [2.0, 5.0, np.sqrt(29.0)]
    assert electrostatic_energy(r, params) == pytest.approx(sum(1 / x for x in d), rel=1e-14)


def test_vdw_minimum_and_zero_crossing():
    params = two_atoms(q=(0.0, 0.0))
    D = 2.5
    eps = np.sqrt(0.2 * 0.05)

    def energy(d):
        return vdw_energy(np.array([[0.0, 0, 0], [d, 0, 0]]), params)

    assert energy(D) == pytest.approx(-eps, rel=1e-14)
    root = brentq(energy, 1.0, D)
    assert root == pytest.approx(2 ** (-1 / 6) * D, rel=1e-12)
    f = atom_forces(np.array([[0.0, 0, 0], [D, 0, 0]]), params)
    np.testing.assert_allclose(f, 0.0, atol=1e-14)


def _fd_forces(r, params, step=1e-5):
    grad = np.zeros_like(r)
    for i in range(r.shape[0]):
        for a in range(3):
            rp, rm = r.copy(), r.copy()
            rp[i, a] += step
            rm[i, a] -= step
            grad[i, a] = (total_energy(rp, params).total - total_energy(rm, params).total) / (2 * step)
    return -grad


def test_forces_match_finite_differences(fixture_chain, random_thetas):
    topology, params = fixture_chain
    for theta in random_thetas:
        r = forward_kinematics(topology, theta).atom_positions
        analytic = atom_forces(r, params)
        fd = _fd_forces(r, params)
        assert np.max(np.abs(analytic - fd)) / max(1.0, np.max(np.abs(analytic))) < 1e-5


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi), min_size=8, max_size=8), st.integers(0, 2**31))
def test_rigid_motion_invariance(fixture_chain, theta, seed):
    topology, params = fixture_chain
    r = forward_kinematics(topology, np.array(theta)).atom_positions
    R = Rotation.random(random_state=seed).as_matrix()
    moved = r @ R.T + np.array([1.0, -2.0, 3.0])
    assert total_energy(moved, params).total == pytest.approx(total_energy(r, params).total,
                                                              rel=1e-9, abs=1e-9)
    f = atom_forces(r, params)
    scale = max(1.0, np.max(np.abs(f)))
    # internal forces: no net force, no net moment
    assert np.max(np.abs(f.sum(axis=0))) / scale < 1e-10
    assert np.max(np.abs(np.cross(r, f).sum(axis=0))) / scale < 1e-9
    np.testing.assert_allclose(atom_forces(moved, params), f @ R.T, atol=1e-9 * scale)


def test_exclusions_and_one_four_scaling(fixture_chain):
    topology, params = fixture_chain
    sep = bond_separation(topology)
    n1, ca1, c1, n2 = (topology.atom_index(n) for n in ("N1", "CA1", "C1", "N2"))
    assert sep[n1, ca1] == 1 and sep[n1, c1] == 2 and sep[n1, n2] == 3
    assert params.excluded[n1, ca1] and params.excluded[n1, c1]
    assert not params.excluded[n1, n2]
    assert params.w_elec[n1, n2] == 0.5 and params.w_vdw[n1, n2] == 0.5
    far = topology.atom_index("CA3")
    assert params.w_elec[n1, far] == 1.0


def test_rules_change_parameters(fixture_chain):
    topology, _ = fixture_chain
    loose = build_params(topology, ForceFieldRules(exclude_within=0, relative_dielectric=1.0))
    assert not loose.excluded[0, 1]
    assert loose.dielectric[0, 1] == pytest.approx(1 / (4 * np.pi * COULOMB_CONSTANT))
    with pytest.raises(ValidationError, match="relative_dielectric"):
        ForceFieldRules(relative_dielectric=0.0)


def test_singularity_is_reported():
    params = two_atoms()
    with pytest.raises(SingularityError) as err:
        total_energy(np.array([[0.0, 0, 0], [0, 0, 1e-4]]), params)
    assert err.value.pair == (0, 1)
    assert err.value.distance == pytest.approx(1e-4)
    assert total_energy(np.array([[0.0, 0, 0], [0, 0, 1e-4]]), params.with_exclusions([(0, 1)])).total == 0


def test_param_validation():
    good = two_atoms()
    with pytest.raises(ValidationError, match="shape"):
        ForceFieldParams(good.charges, good.dielectric[:1], good.well_depth, good.vdw_distance,
                         good.w_elec, good.w_vdw, good.excluded)
    asym = good.w_elec.copy()
    asym[0, 1] = 2.0
    with pytest.raises(ValidationError, match="symmetric"):
        ForceFieldParams(good.charges, good.dielectric, good.well_depth, good.vdw_distance,
                         asym, good.w_vdw, good.excluded)
    with pytest.raises(ValidationError, match="atom positions"):
        total_energy(np.zeros((3, 3)), good)
