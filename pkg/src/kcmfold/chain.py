"""Serial-linkage model of a protein backbone and its forward kinematics.

The backbone with ``N - 1`` peptide planes has ``2N`` revolute joints, one per
dihedral angle, ordered along the chain as ``phi_1, psi_1, phi_2, ..., psi_N``.
Joint ``j`` (1-based) rotates about the zero-position unit axis ``u_j^0`` and
owns the zero-position body vector ``b_j^0``.

Anchors
    ``A_0`` is the N-terminal nitrogen, fixed at the origin, and
    ``A_j = A_{j-1} + b_j`` for ``j = 1..2N``.  Joint ``j`` pivots about the
    line through ``A_{j-1}`` along ``u_j``.  With the bundled geometry
    ``A_{2k-1}`` is the alpha carbon of residue ``k``, ``A_{2k}`` the amide
    nitrogen of residue ``k + 1`` and ``A_{2N}`` the terminal carbonyl carbon.

Links
    Link ``m`` is the rigid body between joints ``m`` and ``m + 1``; link 0 is
    the fixed base.  Peptide plane ``i`` is link ``2i``.

Every atom is placed by one of three rules, selected by its role:

* ``backbone-N`` / ``backbone-CA``: the anchor point ``A_a`` (link ``a``).
* ``plane-offset``: ``A_{2i-1} + k1 * b_{2i} + k2 * b_{2i+1}`` for plane ``i``.
* ``terminus``: ``A_a + Xi_link @ offset`` with a zero-frame offset vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError

ROLES = ("backbone-N", "backbone-CA", "plane-offset", "terminus")

_UNIT_TOL = 1e-12
_AXIS_TOL = 1e-9
_COLLINEAR_TOL = 1e-8


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for ``angle`` radians about a unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or not np.all(np.isfinite(axis)):
        raise ValidationError(f"axis must be a finite 3-vector, got {axis!r}")
    if abs(np.linalg.norm(axis) - 1.0) > _AXIS_TOL:
        raise ValidationError(f"axis must have unit length, |axis| = {np.linalg.norm(axis)!r}")
    if not np.isfinite(angle):
        raise ValidationError(f"angle must be finite, got {angle!r}")
    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class AtomRecord:
    """One atom of the chain together with its force-field parameters.

    ``anchor`` is the anchor index used by backbone and terminus atoms,
    ``plane`` and ``coeffs`` are used by plane-offset atoms, ``offset`` by
    terminus atoms.  ``link`` is derived from the role and is the index of the
    rigid body the atom belongs to.
    """

    name: str
    element: str
    role: str
    charge: float
    radius: float
    well_depth: float
    anchor: Optional[int] = None
    plane: Optional[int] = None
    coeffs: Optional[tuple[float, float]] = None
    offset: Optional[tuple[float, float, float]] = None
    link_index: Optional[int] = None

    @property
    def link(self) -> int:
        if self.role == "plane-offset":
            return 2 * self.plane
        if self.role == "terminus":
            return self.link_index
        return self.anchor


@dataclass(frozen=True, eq=False)
class ChainTopology:
    """Immutable description of the backbone linkage at its zero position.

    Validation runs at construction, so an instance that exists satisfies all
    of the structural invariants the kinematics relies on.
    """

    n_planes: int
    zero_axis_vectors: np.ndarray
    zero_body_vectors: np.ndarray
    atoms: tuple[AtomRecord, ...]
    bonds: tuple[tuple[str, str], ...] = ()
    name: str = "chain"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = np.array(self.zero_axis_vectors, dtype=float)
        bodies = np.array(self.zero_body_vectors, dtype=float)
        axes.setflags(write=False)
        bodies.setflags(write=False)
        object.__setattr__(self, "zero_axis_vectors", axes)
        object.__setattr__(self, "zero_body_vectors", bodies)
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(tuple(b) for b in self.bonds))
        self._validate()
        object.__setattr__(self, "_index", {a.name: i for i, a in enumerate(self.atoms)})
        _build_placement_tables(self)

    @property
    def n_joints(self) -> int:
        return 2 * (self.n_planes + 1)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def elements(self) -> list[str]:
        return [a.element for a in self.atoms]

    @property
    def plane_atom_offsets(self) -> dict[str, tuple[float, float]]:
        return {a.name: a.coeffs for a in self.atoms if a.role == "plane-offset"}

    def atom_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown atom {name!r}") from None

    def __eq__(self, other):
        if not isinstance(other, ChainTopology):
            return NotImplemented
        return (
            self.n_planes == other.n_planes
            and self.name == other.name
            and np.array_equal(self.zero_axis_vectors, other.zero_axis_vectors)
            and np.array_equal(self.zero_body_vectors, other.zero_body_vectors)
            and self.atoms == other.atoms
            and self.bonds == other.bonds
        )

    __hash__ = None

    def zero_anchors(self) -> np.ndarray:
        anchors = np.zeros((self.n_joints + 1, 3))
        anchors[1:] = np.cumsum(self.zero_body_vectors, axis=0)
        return anchors

    def _validate(self):
        if not isinstance(self.n_planes, (int, np.integer)) or self.n_planes < 1:
            raise ValidationError(f"n_planes: must be a positive integer, got {self.n_planes!r}")
        n_joints = self.n_joints
        for label, arr in (("zero_axis_vectors", self.zero_axis_vectors),
                           ("zero_body_vectors", self.zero_body_vectors)):
            if arr.shape != (n_joints, 3):
                raise ValidationError(
                    f"{label}: expected {n_joints} 3-vectors for {self.n_planes} planes, "
                    f"got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{label}: entries must be finite")
        norms = np.linalg.norm(self.zero_axis_vectors, axis=1)
        for j, nrm in enumerate(norms):
            if abs(nrm - 1.0) > _UNIT_TOL:
                raise ValidationError(
                    f"zero_axis_vectors[{j}] (joint {j + 1}): not a unit vector, |u| = {nrm:.12g}")
        if not self.atoms:
            raise ValidationError("atoms: chain has no atoms")

        anchors = self.zero_anchors()
        names = set()
        for n, atom in enumerate(self.atoms):
            where = f"atoms[{n}] ({atom.name})"
            if atom.name in names:
                raise ValidationError(f"{where}: duplicate atom name")
            names.add(atom.name)
            if atom.role not in ROLES:
                raise ValidationError(f"{where}.role: unknown role {atom.role!r}")
            if not np.isfinite(atom.radius) or atom.radius <= 0:
                raise ValidationError(f"{where}.radius: must be > 0, got {atom.radius!r}")
            if not np.isfinite(atom.well_depth) or atom.well_depth < 0:
                raise ValidationError(f"{where}.well_depth: must be >= 0, got {atom.well_depth!r}")
            if not np.isfinite(atom.charge):
                raise ValidationError(f"{where}.charge: must be finite")
            if atom.role == "plane-offset":
                if atom.plane is None or not 1 <= atom.plane <= self.n_planes:
                    raise ValidationError(
                        f"{where}.plane: must be in 1..{self.n_planes}, got {atom.plane!r}")
                if atom.coeffs is None or len(atom.coeffs) != 2:
                    raise ValidationError(f"{where}.coeffs: expected a (k1, k2) pair")
            else:
                if atom.anchor is None or not 0 <= atom.anchor <= n_joints:
                    raise ValidationError(
                        f"{where}.anchor: must be in 0..{n_joints}, got {atom.anchor!r}")
            if atom.role == "terminus":
                link = atom.link_index
                if link is None or not atom.anchor <= link <= n_joints:
                    raise ValidationError(
                        f"{where}.link: must be in {atom.anchor}..{n_joints}, got {link!r}")
                if atom.offset is None or len(atom.offset) != 3:
                    raise ValidationError(f"{where}.offset: expected a 3-vector")
                # anchor must sit on every joint axis between its own link and the atom's link
                for j in range(atom.anchor + 1, link + 1):
                    arm = anchors[atom.anchor] - anchors[j - 1]
                    if np.linalg.norm(np.cross(self.zero_axis_vectors[j - 1], arm)) > _COLLINEAR_TOL:
                        raise ValidationError(
                            f"{where}: anchor {atom.anchor} is not on the axis of joint {j}, "
                            f"so the atom cannot be rigid with link {link}")

        # plane i is rigid with link 2i only if b_{2i+1} lies along u_{2i+1}
        for plane in sorted({a.plane for a in self.atoms if a.role == "plane-offset"}):
            j = 2 * plane + 1
            b = self.zero_body_vectors[j - 1]
            u = self.zero_axis_vectors[j - 1]
            if np.linalg.norm(np.cross(u, b)) > _COLLINEAR_TOL * max(1.0, np.linalg.norm(b)):
                raise ValidationError(
                    f"zero_body_vectors[{j - 1}] (joint {j}): must be parallel to its axis for "
                    f"plane {plane} to stay rigid")
            span = np.cross(self.zero_body_vectors[j - 2], b)
            if np.linalg.norm(span) < _COLLINEAR_TOL:
                raise ValidationError(f"plane {plane}: body vectors are collinear")

        for n, bond in enumerate(self.bonds):
            if len(bond) != 2 or bond[0] not in names or bond[1] not in names or bond[0] == bond[1]:
                raise ValidationError(f"bonds[{n}]: invalid bond {bond!r}")


def _build_placement_tables(topology: ChainTopology) -> None:
    """Precompute per-atom index/coefficient arrays for vectorized placement."""
    n = topology.n_atoms
    anchor = np.zeros(n, dtype=int)
    link = np.zeros(n, dtype=int)
    k = np.zeros((n, 2))
    kidx = np.zeros((n, 2), dtype=int)
    offset = np.zeros((n, 3))
    for i, atom in enumerate(topology.atoms):
        link[i] = atom.link
        if atom.role == "plane-offset":
            anchor[i] = 2 * atom.plane - 1
            k[i] = atom.coeffs
            # body vectors b_{2i}, b_{2i+1} live at rows 2i-1, 2i
            kidx[i] = (2 * atom.plane - 1, 2 * atom.plane)
        else:
            anchor[i] = atom.anchor
            if atom.role == "terminus":
                offset[i] = atom.offset
    for name, arr in (("_anchor_idx", anchor), ("_link_idx", link), ("_k", k),
                      ("_k_idx", kidx), ("_offset", offset)):
        arr.setflags(write=False)
        object.__setattr__(topology, name, arr)


@dataclass(frozen=True)
class KinematicState:
    """Geometry derived from one conformation.

    ``cumulative_rotations[m]`` is ``Xi(theta, u_m^0)`` with index 0 holding
    the identity of the fixed base link, so it has ``2N + 1`` entries.
    """

    theta: np.ndarray
    axis_vectors: np.ndarray
    body_vectors: np.ndarray
    anchors: np.ndarray
    atom_positions: np.ndarray
    cumulative_rotations: np.ndarray
    atom_links: np.ndarray

    @property
    def joint_points(self) -> np.ndarray:
        """Pivot of each joint: joint j turns about the line through A_{j-1}."""
        return self.anchors[:-1]


def check_conformation(topology: ChainTopology, theta) -> np.ndarray:
    """Return ``theta`` as a float array after checking length and finiteness."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (topology.n_joints,):
        raise ValidationError(
            f"conformation must have {topology.n_joints} dihedral angles, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValidationError("conformation contains non-finite angles")
    return theta


def forward_kinematics(topology: ChainTopology, theta) -> KinematicState:
    theta = check_conformation(topology, theta)
    n_joints = topology.n_joints
    u0 = topology.zero_axis_vectors
    b0 = topology.zero_body_vectors

    xi = np.empty((n_joints + 1, 3, 3))
    xi[0] = np.eye(3)
    for j in range(n_joints):
        xi[j + 1] = xi[j] @ rotation_about_axis(u0[j], theta[j])

    axes = np.einsum("jab,jb->ja", xi[1:], u0)
    bodies = np.einsum("jab,jb->ja", xi[1:], b0)
    anchors = np.zeros((n_joints + 1, 3))
    anchors[1:] = np.cumsum(bodies, axis=0)

    links = topology._link_idx
    positions = anchors[topology._anchor_idx].copy()
    positions += topology._k[:, :1] * bodies[topology._k_idx[:, 0]]
    positions += topology._k[:, 1:] * bodies[topology._k_idx[:, 1]]
    positions += np.einsum("nab,nb->na", xi[links], topology._offset)

    return KinematicState(
        theta=theta,
        axis_vectors=axes,
        body_vectors=bodies,
        anchors=anchors,
        atom_positions=positions,
        cumulative_rotations=xi,
        atom_links=links,
    )


def pairwise_distance(state: KinematicState, i: int, j: int) -> float:
    if i == j:
        raise ValidationError("pairwise_distance needs two distinct atoms")
    r = state.atom_positions
    return float(np.linalg.norm(r[i] - r[j]))


def downstream_mask(topology: ChainTopology, joint: int) -> np.ndarray:
    """Atoms moved by 1-based ``joint``: everything in links ``>= joint``."""
    return topology._link_idx >= joint


def as_atom_records(rows: Sequence[dict]) -> tuple[AtomRecord, ...]:
    out = []
    for row in rows:
        row = dict(row)
        if row.get("coeffs") is not None:
            row["coeffs"] = tuple(float(c) for c in row["coeffs"])
        if row.get("offset") is not None:
            row["offset"] = tuple(float(c) for c in row["offset"])
        out.append(AtomRecord(**row))
    return tuple(out)
