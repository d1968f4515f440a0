"""Chain-spec files, trajectory files and XYZ snapshots.

Chain spec (YAML, ``schema_version: 1``)::

    schema_version: 1
    name: backbone-10
    n_planes: 10
    zero_axis_vectors: [[ux, uy, uz], ...]      # 2N unit vectors
    zero_body_vectors: [[bx, by, bz], ...]      # 2N vectors, Angstrom
    atoms:
      - {name: N1, element: N, role: terminus, anchor: 0, link: 0,
         offset: [0, 0, 0], charge: 0.84, radius: 1.85, well_depth: 0.2}
      - {name: CA1, element: C, role: backbone-CA, anchor: 1, ...}
      - {name: C1, element: C, role: plane-offset, plane: 1, k: [k1, k2], ...}
    bonds: [[N1, CA1], ...]
    force_field: {relative_dielectric: 4.0, elec_weight: 1.0, vdw_weight: 1.0,
                  exclude_within: 2, scale14_elec: 0.5, scale14_vdw: 0.5}

Trajectory files write every float with 17 significant digits so values
read back bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from .chain import AtomRecord, ChainTopology, KinematicState
from .energetics import ForceFieldParams, ForceFieldRules, build_params
from .exceptions import ValidationError

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CHAIN_SPEC = DATA_DIR / "backbone_10.yaml"
FIXTURE_CHAIN_SPEC = DATA_DIR / "backbone_3.yaml"

_ATOM_KEYS = {"name", "element", "role", "charge", "radius", "well_depth",
              "anchor", "link", "plane", "k", "offset"}


def _num(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# chain spec
# ---------------------------------------------------------------------------

def _vectors(doc, key, where):
    try:
        arr = np.array(doc[key], dtype=float)
    except KeyError:
        raise ValidationError(f"{where}: missing field {key!r}") from None
    except (TypeError, ValueError):
        raise ValidationError(f"{where}.{key}: expected a list of 3-vectors") from None
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"{where}.{key}: expected a list of 3-vectors, got shape {arr.shape}")
    return arr


def _atom_from_doc(entry, n: int) -> AtomRecord:
    where = f"atoms[{n}]"
    if not isinstance(entry, dict):
        raise ValidationError(f"{where}: expected a mapping")
    unknown = set(entry) - _ATOM_KEYS
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        kwargs = dict(
            name=str(entry["name"]),
            element=str(entry["element"]),
            role=str(entry["role"]),
            charge=float(entry["charge"]),
            radius=float(entry["radius"]),
            well_depth=float(entry["well_depth"]),
        )
    except KeyError as exc:
        raise ValidationError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None
    if kwargs["role"] == "plane-offset":
        if "plane" not in entry or "k" not in entry:
            raise ValidationError(f"{where}: plane-offset atoms need 'plane' and 'k'")
        kwargs["plane"] = int(entry["plane"])
        kwargs["coeffs"] = tuple(float(v) for v in entry["k"])
    else:
        if "anchor" not in entry:
            raise ValidationError(f"{where}: missing field 'anchor'")
        kwargs["anchor"] = int(entry["anchor"])
    if kwargs["role"] == "terminus":
        if "link" not in entry or "offset" not in entry:
            raise ValidationError(f"{where}: terminus atoms need 'link' and 'offset'")
        kwargs["link_index"] = int(entry["link"])
        kwargs["offset"] = tuple(float(v) for v in entry["offset"])
    return AtomRecord(**kwargs)


def parse_chain_spec(doc) -> tuple[ChainTopology, ForceFieldRules]:
    if not isinstance(doc, dict):
        raise ValidationError("chain spec: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    if "n_planes" not in doc:
        raise ValidationError("chain spec: missing field 'n_planes'")
    atoms = doc.get("atoms")
    if not isinstance(atoms, list):
        raise ValidationError("atoms: expected a list")
    bonds = doc.get("bonds", [])
    if not isinstance(bonds, list):
        raise ValidationError("bonds: expected a list of atom-name pairs")

    rules_doc = doc.get("force_field", {}) or {}
    valid = {f.name for f in fields(ForceFieldRules)}
    unknown = set(rules_doc) - valid
    if unknown:
        raise ValidationError(f"force_field: unknown keys {sorted(unknown)}")
    rules = ForceFieldRules(**rules_doc)

    topology = ChainTopology(
        n_planes=int(doc["n_planes"]),
        zero_axis_vectors=_vectors(doc, "zero_axis_vectors", "chain spec"),
        zero_body_vectors=_vectors(doc, "zero_body_vectors", "chain spec"),
        atoms=tuple(_atom_from_doc(a, n) for n, a in enumerate(atoms)),
        bonds=tuple(tuple(str(x) for x in b) for b in bonds),
        name=str(doc.get("name", "chain")),
    )
    return topology, rules


def read_chain_spec(path) -> tuple[ChainTopology, ForceFieldRules]:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read chain spec ({exc.strerror})") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: malformed YAML: {exc}") from None
    try:
        return parse_chain_spec(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def load_chain_spec(path=DEFAULT_CHAIN_SPEC) -> tuple[ChainTopology, ForceFieldParams]:
    topology, rules = read_chain_spec(path)
    return topology, build_params(topology, rules)


def chain_spec_document(topology: ChainTopology, rules: ForceFieldRules) -> dict:
    atoms = []
    for a in topology.atoms:
        entry = {"name": a.name, "element": a.element, "role": a.role}
        if a.role == "plane-offset":
            entry["plane"] = a.plane
            entry["k"] = [float(v) for v in a.coeffs]
        else:
            entry["anchor"] = a.anchor
        if a.role == "terminus":
            entry["link"] = a.link_index
            entry["offset"] = [float(v) for v in a.offset]
        entry.update(charge=float(a.charge), radius=float(a.radius),
                     well_depth=float(a.well_depth))
        atoms.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": topology.name,
        "n_planes": int(topology.n_planes),
        "zero_axis_vectors": topology.zero_axis_vectors.tolist(),
        "zero_body_vectors": topology.zero_body_vectors.tolist(),
        "atoms": atoms,
        "bonds": [list(b) for b in topology.bonds],
        "force_field": {f.name: getattr(rules, f.name) for f in fields(ForceFieldRules)},
    }


class _FlowDumper(yaml.SafeDumper):
    pass


def _flow_list(dumper, data):
    flow = all(not isinstance(x, (list, dict)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


class _Block(dict):
    pass


def _flow_dict(dumper, data):
    return dumper.represent_mapping("tag:yaml.org,2002:map", data, flow_style=True)


def _block_dict(dumper, data):
    return dumper.represent_mapping("tag:yaml.org,2002:map", data, flow_style=False)


_FlowDumper.add_representer(list, _flow_list)
_FlowDumper.add_representer(dict, _flow_dict)
_FlowDumper.add_representer(_Block, _block_dict)


def save_chain_spec(topology: ChainTopology, rules: ForceFieldRules, path) -> None:
    doc = chain_spec_document(topology, rules)
    with open(path, "w") as fh:
        fh.write(f"# kcmfold chain spec: {topology.name}\n")
        fh.write(yaml.dump(_Block(doc), Dumper=_FlowDumper, sort_keys=False, width=100))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def trajectory_columns(n_joints: int) -> list[str]:
    cols = ["k"]
    cols += [f"theta_{j}" for j in range(1, n_joints + 1)]
    cols += [f"tau_{j}" for j in range(1, n_joints + 1)]
    cols += ["tau_inf", "energy_total", "energy_elec", "energy_vdw"]
    cols += [f"u_{j}" for j in range(1, n_joints + 1)]
    cols += ["u_inf", "n_active"]
    return cols


def _record_row(rec) -> list:
    return ([rec.k] + list(rec.theta) + list(rec.tau)
            + [rec.tau_inf, rec.energy.total, rec.energy.elec, rec.energy.vdw]
            + list(rec.control) + [rec.control_inf, rec.n_active])


def trajectory_header(result) -> dict:
    header = {"config": result.config.as_dict(), "status": result.status, "steps": result.steps}
    header["bounds"] = None if result.bounds is None else [float(c) for c in result.bounds]
    return header


def write_trajectory(records, path, fmt: str = "csv", header: dict | None = None) -> None:
    """Write step records as CSV (``#`` header line with JSON metadata) or JSON lines."""
    records = list(records)
    if not records:
        raise ValidationError("no trajectory records to write")
    if fmt not in ("csv", "jsonl"):
        raise ValidationError(f"unknown trajectory format {fmt!r}")
    n = len(records[0].theta)
    cols = trajectory_columns(n)
    header = header or {}
    meta = json.dumps(header, sort_keys=True, separators=(",", ":"))

    def fmt_value(v):
        return str(v) if isinstance(v, (int, np.integer)) else _num(v)

    with open(path, "w", newline="\n") as fh:
        if fmt == "csv":
            fh.write("# " + meta + "\n")
            fh.write(",".join(cols) + "\n")
            for rec in records:
                fh.write(",".join(fmt_value(v) for v in _record_row(rec)) + "\n")
        else:
            fh.write('{"header":' + meta + "}\n")
            for rec in records:
                row = _record_row(rec)
                body = ",".join(f'"{c}":{fmt_value(v)}' for c, v in zip(cols, row))
                fh.write("{" + body + "}\n")


def read_trajectory(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(header, columns)``; integer columns come back as int arrays."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("# "):
            header = json.loads(first[2:])
            cols = fh.readline().strip().split(",")
            rows = [line.strip().split(",") for line in fh if line.strip()]
            data = {c: [row[i] for row in rows] for i, c in enumerate(cols)}
        else:
            header = json.loads(first)["header"]
            rows = [json.loads(line, parse_float=str, parse_int=str) for line in fh if line.strip()]
            cols = list(rows[0]) if rows else []
            data = {c: [row[c] for row in rows] for c in cols}
    out = {}
    for c, values in data.items():
        if c in ("k", "n_active"):
            out[c] = np.array([int(v) for v in values], dtype=int)
        else:
            out[c] = np.array([float(v) for v in values])
    return header, out


# ---------------------------------------------------------------------------
# XYZ
# ---------------------------------------------------------------------------

def write_xyz(path, elements: Iterable[str], positions, comment: str = "") -> None:
    positions = np.asarray(positions, dtype=float)
    elements = list(elements)
    if positions.shape != (len(elements), 3):
        raise ValidationError("one 3-vector per element is required")
    comment = comment.replace("\n", " ")
    lines = [str(len(elements)), comment]
    lines += [f"{el:<2s} {x:18.10f} {y:18.10f} {z:18.10f}" for el, (x, y, z) in zip(elements, positions)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_xyz_snapshot(state: KinematicState, topology: ChainTopology, path, comment: str = "") -> None:
    write_xyz(path, topology.elements, state.atom_positions, comment)
