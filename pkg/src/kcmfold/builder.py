"""Ideal backbone geometry used to generate the bundled chain specs.

The zero-position conformation is the fully extended chain (all backbone
torsions at 180 degrees) with trans peptide bonds.  Charges follow CHARMM22
backbone types with the alpha hydrogen folded into the alpha carbon and, unless
``hydrogens=True``, the amide hydrogen folded into its nitrogen.  vdW
parameters are CHARMM22 ``Rmin/2`` and well depths.
"""

from __future__ import annotations

import math

import numpy as np

from .chain import AtomRecord, ChainTopology

BOND_N_CA = 1.458
BOND_CA_C = 1.525
BOND_C_N = 1.329
BOND_C_O = 1.231
BOND_N_H = 1.010
BOND_C_OXT = 1.250

ANGLE_N_CA_C = math.radians(111.2)
ANGLE_CA_C_N = math.radians(116.2)
ANGLE_C_N_CA = math.radians(121.7)
ANGLE_CA_C_O = math.radians(120.5)
ANGLE_CA_N_H = math.radians(118.0)
ANGLE_CA_C_OXT = math.radians(117.0)

# (radius = Rmin/2 in Angstrom, well depth in kcal/mol)
VDW = {
    "N": (1.85, 0.20),
    "H": (0.2245, 0.046),
    "CA": (2.275, 0.02),
    "C": (2.00, 0.11),
    "O": (1.70, 0.12),
    "OC": (1.70, 0.12),
}

CHARGE = {"N": -0.47, "H": 0.31, "CA": 0.16, "C": 0.51, "O": -0.51, "NH": -0.16}
CHARGE_NTERM_N = 0.84  # lumped NH3+ so residue 1 carries +1
CHARGE_CTERM_C = 0.34
CHARGE_CTERM_O = -0.67


def place_atom(a, b, c, bond, angle, torsion):
    """NeRF placement of D with |CD| = bond, angle BCD, dihedral ABCD."""
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    d2 = np.array([
        -bond * math.cos(angle),
        bond * math.sin(angle) * math.cos(torsion),
        bond * math.sin(angle) * math.sin(torsion),
    ])
    return c + d2[0] * bc + d2[1] * m + d2[2] * n


def extended_backbone(n_residues: int) -> dict[str, np.ndarray]:
    """Cartesian coordinates of an extended chain keyed by atom name."""
    pi = math.pi
    xyz = {}
    xyz["N1"] = np.zeros(3)
    xyz["CA1"] = np.array([BOND_N_CA, 0.0, 0.0])
    xyz["C1"] = xyz["CA1"] + BOND_CA_C * np.array(
        [-math.cos(ANGLE_N_CA_C), math.sin(ANGLE_N_CA_C), 0.0])
    for k in range(1, n_residues):
        n, ca, c = xyz[f"N{k}"], xyz[f"CA{k}"], xyz[f"C{k}"]
        nxt = place_atom(n, ca, c, BOND_C_N, ANGLE_CA_C_N, pi)
        xyz[f"N{k + 1}"] = nxt
        xyz[f"O{k}"] = place_atom(nxt, ca, c, BOND_C_O, ANGLE_CA_C_O, pi)
        ca2 = place_atom(ca, c, nxt, BOND_N_CA, ANGLE_C_N_CA, pi)
        xyz[f"CA{k + 1}"] = ca2
        xyz[f"H{k + 1}"] = place_atom(c, ca2, nxt, BOND_N_H, ANGLE_CA_N_H, pi)
        xyz[f"C{k + 1}"] = place_atom(c, nxt, ca2, BOND_CA_C, ANGLE_N_CA_C, pi)
    last = n_residues
    n, ca, c = xyz[f"N{last}"], xyz[f"CA{last}"], xyz[f"C{last}"]
    xyz[f"O{last}"] = place_atom(n, ca, c, BOND_C_OXT, ANGLE_CA_C_OXT, 0.0)
    xyz[f"OXT{last}"] = place_atom(n, ca, c, BOND_C_OXT, ANGLE_CA_C_OXT, pi)
    return xyz


def _unit(v):
    return v / np.linalg.norm(v)


def build_backbone_topology(n_planes: int, hydrogens: bool = False,
                            name: str | None = None) -> ChainTopology:
    """Backbone linkage with ``n_planes`` peptide planes (``n_planes + 1`` residues)."""
    n_res = n_planes + 1
    xyz = extended_backbone(n_res)

    anchors = []
    for k in range(1, n_res + 1):
        anchors += [f"N{k}", f"CA{k}"]
    anchors.append(f"C{n_res}")
    anchor_xyz = np.array([xyz[a] for a in anchors])
    bodies = np.diff(anchor_xyz, axis=0)

    axes = []
    for k in range(1, n_res + 1):
        axes.append(_unit(xyz[f"CA{k}"] - xyz[f"N{k}"]))
        axes.append(_unit(xyz[f"C{k}"] - xyz[f"CA{k}"]))
    axes = np.array(axes)

    def vdw(kind):
        return VDW[kind]

    atoms = []
    r, e = vdw("N")
    atoms.append(AtomRecord("N1", "N", "terminus", CHARGE_NTERM_N, r, e,
                            anchor=0, offset=(0.0, 0.0, 0.0), link_index=0))
    for k in range(1, n_res + 1):
        if k > 1:
            r, e = vdw("N")
            q = CHARGE["N"] if hydrogens else CHARGE["NH"]
            atoms.append(AtomRecord(f"N{k}", "N", "backbone-N", q, r, e, anchor=2 * k - 2))
        r, e = vdw("CA")
        atoms.append(AtomRecord(f"CA{k}", "C", "backbone-CA", CHARGE["CA"], r, e, anchor=2 * k - 1))
        if k < n_res:
            plane = k
            basis = np.column_stack([bodies[2 * plane - 1], bodies[2 * plane]])
            members = [(f"C{k}", "C", "C"), (f"O{k}", "O", "O")]
            if hydrogens:
                members.append((f"H{k + 1}", "H", "H"))
            for atom, elem, kind in members:
                rel = xyz[atom] - xyz[f"CA{k}"]
                coeffs, *_ = np.linalg.lstsq(basis, rel, rcond=None)
                r, e = vdw(kind)
                atoms.append(AtomRecord(atom, elem, "plane-offset", CHARGE[kind], r, e,
                                        plane=plane, coeffs=(float(coeffs[0]), float(coeffs[1]))))
    n_joints = 2 * n_res
    c_last = xyz[f"C{n_res}"]
    r, e = vdw("C")
    atoms.append(AtomRecord(f"C{n_res}", "C", "terminus", CHARGE_CTERM_C, r, e,
                            anchor=n_joints, offset=(0.0, 0.0, 0.0), link_index=n_joints))
    r, e = vdw("OC")
    for atom in (f"O{n_res}", f"OXT{n_res}"):
        off = tuple(float(x) for x in xyz[atom] - c_last)
        atoms.append(AtomRecord(atom, "O", "terminus", CHARGE_CTERM_O, r, e,
                                anchor=n_joints, offset=off, link_index=n_joints))

    bonds = []
    for k in range(1, n_res + 1):
        bonds += [(f"N{k}", f"CA{k}"), (f"CA{k}", f"C{k}"), (f"C{k}", f"O{k}")]
        if k < n_res:
            bonds.append((f"C{k}", f"N{k + 1}"))
            if hydrogens:
                bonds.append((f"N{k + 1}", f"H{k + 1}"))
    bonds.append((f"C{n_res}", f"OXT{n_res}"))

    return ChainTopology(
        n_planes=n_planes,
        zero_axis_vectors=axes,
        zero_body_vectors=bodies,
        atoms=tuple(atoms),
        bonds=tuple(bonds),
        name=name or f"backbone-{n_planes}",
    )
