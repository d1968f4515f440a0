"""Electrostatic and 12-6 van der Waals free energy with analytic atom forces.

Units are kcal/mol, Angstrom and elementary charge.  The Coulomb prefactor is
``w_elec / (4 pi eps_ij)``; with ``eps_ij = eps_r / (4 pi * COULOMB_CONSTANT)``
that evaluates to ``w_elec * 332.0636 / eps_r``.

Each unordered pair is counted once.  A double sum over ``i`` and ``j != i``
would visit every pair twice; the weights in a chain spec are meant for the
single-count convention.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainTopology, KinematicState
from .exceptions import SingularityError, ValidationError

COULOMB_CONSTANT = 332.0636  # kcal * Angstrom / (mol * e^2)
DISTANCE_FLOOR = 1e-3  # Angstrom


def dielectric_from_relative(eps_r: float) -> float:
    """Pair dielectric ``eps_ij`` such that ``1/(4 pi eps_ij) = COULOMB_CONSTANT / eps_r``."""
    return eps_r / (4.0 * np.pi * COULOMB_CONSTANT)


@dataclass(frozen=True)
class ForceFieldRules:
    """Per-chain rules from which the pairwise parameter matrices are built.

    ``exclude_within`` drops pairs separated by at most that many covalent
    bonds (2 removes 1-2 and 1-3 pairs); pairs exactly one bond further apart
    (1-4) are scaled by ``scale14_elec`` and ``scale14_vdw``.
    """

    relative_dielectric: float = 4.0
    elec_weight: float = 1.0
    vdw_weight: float = 1.0
    exclude_within: int = 2
    scale14_elec: float = 0.5
    scale14_vdw: float = 0.5

    def __post_init__(self):
        if not self.relative_dielectric > 0:
            raise ValidationError("force_field.relative_dielectric: must be > 0")
        for name in ("elec_weight", "vdw_weight", "scale14_elec", "scale14_vdw"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"force_field.{name}: must be >= 0")
        if self.exclude_within < 0:
            raise ValidationError("force_field.exclude_within: must be >= 0")


@dataclass(frozen=True, eq=False)
class ForceFieldParams:
    """Pairwise parameters as symmetric ``(N_a, N_a)`` matrices.

    Pairs flagged in ``excluded`` never interact.  The diagonal is ignored.
    """

    charges: np.ndarray
    dielectric: np.ndarray
    well_depth: np.ndarray
    vdw_distance: np.ndarray
    w_elec: np.ndarray
    w_vdw: np.ndarray
    excluded: np.ndarray
    _pairs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.charges)
        for name in ("dielectric", "well_depth", "vdw_distance", "w_elec", "w_vdw", "excluded"):
            m = np.asarray(getattr(self, name))
            if m.shape != (n, n):
                raise ValidationError(f"{name}: expected shape {(n, n)}, got {m.shape}")
            if not np.array_equal(m, m.T):
                raise ValidationError(f"{name}: must be symmetric")
        i, j = np.triu_indices(n, k=1)
        keep = ~np.asarray(self.excluded, dtype=bool)[i, j]
        i, j = i[keep], j[keep]
        if np.any(self.vdw_distance[i, j] <= 0):
            raise ValidationError("vdw_distance: must be > 0 for interacting pairs")
        if np.any(self.w_elec[i, j] < 0) or np.any(self.w_vdw[i, j] < 0):
            raise ValidationError("weights: must be >= 0")
        if np.any(self.dielectric[i, j] <= 0):
            raise ValidationError("dielectric: must be > 0 for interacting pairs")
        q = np.asarray(self.charges, dtype=float)
        coul = self.w_elec[i, j] / (4.0 * np.pi * self.dielectric[i, j]) * q[i] * q[j]
        lj = self.w_vdw[i, j] * self.well_depth[i, j]
        object.__setattr__(self, "_pairs", (i, j, coul, lj, self.vdw_distance[i, j]))

    @property
    def n_atoms(self) -> int:
        return len(self.charges)

    @property
    def pair_indices(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pairs[0], self._pairs[1]

    def with_exclusions(self, pairs) -> "ForceFieldParams":
        excluded = np.array(self.excluded, dtype=bool)
        for a, b in pairs:
            excluded[a, b] = excluded[b, a] = True
        return ForceFieldParams(self.charges, self.dielectric, self.well_depth,
                                self.vdw_distance, self.w_elec, self.w_vdw, excluded)

    @classmethod
    def uniform(cls, charges, radii, well_depths, dielectric=1.0 / (4 * np.pi),
                w_elec=1.0, w_vdw=1.0, excluded=None) -> "ForceFieldParams":
        """Parameters with one dielectric and one pair of weights for every pair."""
        q = np.asarray(charges, dtype=float)
        n = len(q)
        radii = np.asarray(radii, dtype=float)
        eps = np.asarray(well_depths, dtype=float)
        full = np.full((n, n), 1.0)
        if excluded is None:
            excluded = np.zeros((n, n), dtype=bool)
        return cls(
            charges=q,
            dielectric=full * dielectric,
            well_depth=np.sqrt(np.outer(eps, eps)),
            vdw_distance=radii[:, None] + radii[None, :],
            w_elec=full * w_elec,
            w_vdw=full * w_vdw,
            excluded=np.asarray(excluded, dtype=bool),
        )


def bond_separation(topology: ChainTopology) -> np.ndarray:
    """Number of covalent bonds between every atom pair (-1 if disconnected)."""
    n = topology.n_atoms
    adj = [[] for _ in range(n)]
    for a, b in topology.bonds:
        ia, ib = topology.atom_index(a), topology.atom_index(b)
        adj[ia].append(ib)
        adj[ib].append(ia)
    sep = np.full((n, n), -1, dtype=int)
    for src in range(n):
        sep[src, src] = 0
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if sep[src, nxt] < 0:
                    sep[src, nxt] = sep[src, cur] + 1
                    queue.append(nxt)
    return sep


def build_params(topology: ChainTopology, rules: ForceFieldRules) -> ForceFieldParams:
    """Expand per-atom parameters and chain rules into pairwise matrices."""
    q = np.array([a.charge for a in topology.atoms])
    radii = np.array([a.radius for a in topology.atoms])
    depths = np.array([a.well_depth for a in topology.atoms])
    n = len(q)

    sep = bond_separation(topology)
    bonded = sep >= 0
    excluded = bonded & (sep <= rules.exclude_within)
    one_four = bonded & (sep == rules.exclude_within + 1)

    w_elec = np.full((n, n), rules.elec_weight)
    w_vdw = np.full((n, n), rules.vdw_weight)
    w_elec[one_four] *= rules.scale14_elec
    w_vdw[one_four] *= rules.scale14_vdw

    return ForceFieldParams(
        charges=q,
        dielectric=np.full((n, n), dielectric_from_relative(rules.relative_dielectric)),
        well_depth=np.sqrt(np.outer(depths, depths)),
        vdw_distance=radii[:, None] + radii[None, :],
        w_elec=w_elec,
        w_vdw=w_vdw,
        excluded=excluded,
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    elec: float
    vdw: float


def _positions(state) -> np.ndarray:
    if isinstance(state, KinematicState):
        return state.atom_positions
    return np.asarray(state, dtype=float)


def _pair_geometry(r: np.ndarray, params: ForceFieldParams):
    i, j, coul, lj, dist = params._pairs
    if r.shape != (params.n_atoms, 3):
        raise ValidationError(f"expected {params.n_atoms} atom positions, got shape {r.shape}")
    diff = r[i] - r[j]
    d = np.sqrt(np.einsum("pa,pa->p", diff, diff))
    if d.size and d.min() < DISTANCE_FLOOR:
        p = int(np.argmin(d))
        raise SingularityError(
            f"atoms {i[p]} and {j[p]} are {d[p]:.3g} A apart (floor {DISTANCE_FLOOR} A)",
            pair=(int(i[p]), int(j[p])), distance=float(d[p]))
    return i, j, coul, lj, dist, diff, d


def electrostatic_energy(state, params: ForceFieldParams) -> float:
    _, _, coul, _, _, _, d = _pair_geometry(_positions(state), params)
    return float(np.sum(coul / d))


def vdw_energy(state, params: ForceFieldParams) -> float:
    _, _, _, lj, dist, _, d = _pair_geometry(_positions(state), params)
    s6 = (dist / d) ** 6
    return float(np.sum(lj * (s6 * s6 - 2.0 * s6)))


def total_energy(state, params: ForceFieldParams) -> EnergyBreakdown:
    _, _, coul, lj, dist, _, d = _pair_geometry(_positions(state), params)
    s6 = (dist / d) ** 6
    elec = float(np.sum(coul / d))
    vdw = float(np.sum(lj * (s6 * s6 - 2.0 * s6)))
    return EnergyBreakdown(total=elec + vdw, elec=elec, vdw=vdw)


def atom_forces(state, params: ForceFieldParams) -> np.ndarray:
    """Per-atom forces ``-grad_r G`` as an ``(N_a, 3)`` array."""
    r = _positions(state)
    i, j, coul, lj, dist, diff, d = _pair_geometry(r, params)
    s6 = (dist / d) ** 6
    # -dE/dd, positive means repulsive
    mag = coul / d**2 + 12.0 * lj * (s6 * s6 - s6) / d
    pair_f = (mag / d)[:, None] * diff
    forces = np.zeros_like(r)
    np.add.at(forces, i, pair_f)
    np.add.at(forces, j, -pair_f)
    return forces
