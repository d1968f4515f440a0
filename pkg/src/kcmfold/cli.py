"""Command-line entry point: ``kcmfold simulate | compare | check``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure (atom collapse,
QP breakdown or a failed diagnostic).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import forward_kinematics
from .exceptions import KCMError, SingularityError, ValidationError
from .folding import (MODES, SimulationConfig, SimulationResult, discretization_order,
                      initial_conformation, simulate)
from .io import (DEFAULT_CHAIN_SPEC, FIXTURE_CHAIN_SPEC, load_chain_spec, trajectory_header,
                 write_trajectory, write_xyz_snapshot)
from .kinetostatics import TorqueField, torque_gradient_error
from .qp import QPError, lipschitz_probe, lp_feasibility_omega

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

OUTPUT_ENV = "KCMFOLD_OUTPUT_DIR"
DEFAULT_VARIANTS = ("conventional", "ods-qp:rho=20", "ods-qp:rho=9", "ods-qp:rho=2")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _positive(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _count(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _add_run_flags(p, with_mode=True):
    p.add_argument("--spec", type=Path, default=DEFAULT_CHAIN_SPEC,
                   help="chain-spec YAML (default: bundled 10-plane backbone)")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default: ${OUTPUT_ENV} or ./kcmfold-out)")
    p.add_argument("--h", type=_positive, default=0.04, help="Euler step size (default 0.04)")
    p.add_argument("--iters", type=_count, default=325, help="iteration budget (default 325)")
    p.add_argument("--threshold", type=float, default=1e-3,
                   help="stop when max |tau| drops below this (default 1e-3)")
    if with_mode:
        p.add_argument("--mode", choices=MODES, default="conventional")
        p.add_argument("--rho", type=_positive, default=20.0,
                       help="bound scale, c_i = c0 * rho / sqrt(2N) (default 20)")
        p.add_argument("--bound", type=_positive, default=None,
                       help="explicit per-joint bound c_i, overrides --rho")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("uniform", "zero"), default="uniform",
                   help="initial dihedral angles (default: uniform about 27.7 deg, sd 1.1 deg)")
    p.add_argument("--record-every", type=_count, default=1)
    p.add_argument("--stall-window", type=_count, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kcmfold", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one folding simulation and write artifacts")
    _add_run_flags(p)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("compare", help="run several variants and tabulate their profiles")
    _add_run_flags(p, with_mode=False)
    p.add_argument("variants", nargs="*", default=list(DEFAULT_VARIANTS),
                   help="MODE[:key=value,...] with keys rho, bound, spec "
                        f"(default: {' '.join(DEFAULT_VARIANTS)})")
    p.add_argument("--table-every", type=_count, default=25, help="rows printed to stdout")

    p = sub.add_parser("check", help="feasibility, Lipschitz and discretization diagnostics")
    p.add_argument("--spec", type=Path, default=DEFAULT_CHAIN_SPEC)
    p.add_argument("--fixture", type=Path, default=FIXTURE_CHAIN_SPEC,
                   help="small chain for the audit and gradient self-test")
    p.add_argument("--rho", type=_positive, default=20.0)
    p.add_argument("--bound", type=_positive, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe-radius", type=_positive, default=0.1)
    p.add_argument("--probe-samples", type=_count, default=64)
    p.add_argument("--h", type=_positive, default=0.04)
    p.add_argument("--t-star", type=_positive, default=2.0)
    p.add_argument("--refinements", type=_count, default=6)
    return parser


def _output_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUTPUT_ENV, "kcmfold-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args, **over) -> SimulationConfig:
    base = dict(h=args.h, max_iter=args.iters, threshold=args.threshold, seed=args.seed,
                init_rule=args.init, record_every=args.record_every,
                stall_window=args.stall_window)
    if hasattr(args, "mode"):
        base.update(mode=args.mode, rho=args.rho, bound=args.bound)
    base.update(over)
    return SimulationConfig(**base)


def run_summary(result: SimulationResult) -> dict:
    """Deterministic run summary; wall-clock is reported separately."""
    fin = result.final
    util = result.max_bound_utilization
    return {
        "status": result.status,
        "steps": result.steps,
        "final_energy": fin.energy.total,
        "initial_energy": result.records[0].energy.total,
        "final_tau_inf": fin.tau_inf,
        "max_bound_utilization": util,
        "stall_step": result.stall_step,
        "error": result.error,
        "config": result.config.as_dict(),
    }


def _dump_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    topology, params = load_chain_spec(args.spec)
    config = _config(args)
    out = _output_dir(args)
    result = simulate(topology, params, config)

    ext = "csv" if args.format == "csv" else "jsonl"
    header = trajectory_header(result)
    header["spec"] = topology.name
    write_trajectory(result.records, out / f"trajectory.{ext}", args.format, header)
    first = result.records[0]
    write_xyz_snapshot(forward_kinematics(topology, first.theta), topology, out / "initial.xyz",
                       f"{topology.name} k=0 energy={first.energy.total:.10g}")
    last = result.final
    write_xyz_snapshot(forward_kinematics(topology, last.theta), topology, out / "final.xyz",
                       f"{topology.name} k={last.k} energy={last.energy.total:.10g}")
    summary = run_summary(result)
    _dump_json(summary, out / "summary.json")

    print(f"mode={config.mode} status={result.status} steps={result.steps}")
    print(f"energy {summary['initial_energy']:.6f} -> {summary['final_energy']:.6f} kcal/mol")
    print(f"final max|tau| = {summary['final_tau_inf']:.6g}")
    if result.bounds is not None:
        print(f"bound c_i = {result.bounds[0]:.6g}, max utilization = "
              f"{100 * summary['max_bound_utilization']:.2f}%")
    print(f"wall-clock {result.wall_time:.3f} s")
    print(f"artifacts written to {out}")
    if result.status == "singular":
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


@dataclass(frozen=True)
class Variant:
    label: str
    mode: str
    rho: float = 20.0
    bound: float | None = None
    spec: Path | None = None


def parse_variant(text: str) -> Variant:
    mode, _, rest = text.partition(":")
    if mode not in MODES:
        raise ValidationError(f"variant {text!r}: mode must be one of {MODES}")
    kw = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"variant {text!r}: expected key=value, got {item!r}")
        if key in ("rho", "bound"):
            try:
                kw[key] = float(value)
            except ValueError:
                raise ValidationError(f"variant {text!r}: {key} is not a number") from None
            if not kw[key] > 0:
                raise ValidationError(f"variant {text!r}: {key} must be > 0")
        elif key == "spec":
            kw["spec"] = Path(value)
        else:
            raise ValidationError(f"variant {text!r}: unknown key {key!r}")
    if mode == "conventional" and ("rho" in kw or "bound" in kw):
        raise ValidationError(f"variant {text!r}: conventional mode takes no bounds")
    return Variant(label=text, mode=mode, **kw)


def _fmt(x):
    return "" if x is None else format(x, ".17g")


def cmd_compare(args) -> int:
    variants = [parse_variant(v) for v in args.variants]
    if len(variants) < 2:
        raise ValidationError("compare needs at least two variants")
    specs = {}
    for v in variants:
        path = v.spec or args.spec
        if path not in specs:
            specs[path] = load_chain_spec(path)
    topologies = [specs[v.spec or args.spec][0] for v in variants]
    if any(t != topologies[0] for t in topologies[1:]):
        raise ValidationError("variants use different chain topologies")

    out = _output_dir(args)
    results = []
    for v in variants:
        topology, params = specs[v.spec or args.spec]
        config = _config(args, mode=v.mode, rho=v.rho, bound=v.bound)
        results.append(simulate(topology, params, config))

    by_k = [{r.k: r for r in res.records} for res in results]
    ks = sorted(set().union(*by_k))
    cols = ["k"]
    for v in variants:
        cols += [f"u_inf[{v.label}]", f"energy[{v.label}]"]
    with open(out / "compare.csv", "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for k in ks:
            row = [str(k)]
            for recs in by_k:
                r = recs.get(k)
                row += [_fmt(r.control_inf if r else None), _fmt(r.energy.total if r else None)]
            fh.write(",".join(row) + "\n")

    ref = results[0].final.energy.total
    rows = []
    for v, res in zip(variants, results):
        e = res.final.energy.total
        rows.append({
            "variant": v.label,
            "status": res.status,
            "stalled": res.status == "stalled",
            "steps": res.steps,
            "final_energy": e,
            "delta_energy": e - ref,
            "relative_delta": (e - ref) / abs(ref) if ref != 0 else None,
            "final_tau_inf": res.final.tau_inf,
            "max_bound_utilization": res.max_bound_utilization,
        })
    _dump_json({"reference": variants[0].label, "variants": rows}, out / "compare.json")

    width = max(14, *(len(v.label) for v in variants))
    print("max|u_c| and G per step")
    print(f"{'k':>5} " + " ".join(f"{v.label:>{width}}" for v in variants))
    for k in ks:
        if k % args.table_every and k != ks[-1]:
            continue
        cells = []
        for recs in by_k:
            r = recs.get(k)
            cells.append(f"{'-':>{width}}" if r is None else
                         f"{f'{r.control_inf:.3g} / {r.energy.total:.3f}':>{width}}")
        print(f"{k:>5} " + " ".join(cells))
    print()
    print(f"{'variant':<{width}} {'status':>14} {'steps':>5} {'final G':>12} {'dG':>10} "
          f"{'rel':>8} {'stall':>5} {'wall s':>7}")
    for row, res in zip(rows, results):
        rel = "" if row["relative_delta"] is None else f"{100 * row['relative_delta']:.2f}%"
        print(f"{row['variant']:<{width}} {row['status']:>14} {row['steps']:>5} "
              f"{row['final_energy']:>12.4f} {row['delta_energy']:>10.4f} {rel:>8} "
              f"{'yes' if row['stalled'] else 'no':>5} {res.wall_time:>7.2f}")
    print(f"artifacts written to {out}")
    if any(res.status == "singular" for res in results):
        return EXIT_NUMERICAL
    return EXIT_OK


def _line(ok: bool, name: str, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def cmd_check(args) -> int:
    topology, params = load_chain_spec(args.spec)
    n = topology.n_joints
    config = SimulationConfig(mode="ods-qp", rho=args.rho, bound=args.bound, seed=args.seed)
    ok = True

    cert = lp_feasibility_omega(config.bounds(n))
    ok &= _line(cert.satisfied, "feasibility", f"omega = {cert.omega:.10g} (> 0: {cert.satisfied})")

    field_ = TorqueField(topology, params)
    theta0 = config.initial(n)
    est = lipschitz_probe(field_, theta0, args.probe_radius, args.probe_samples, args.seed)
    finite = math.isfinite(est.lipschitz) and est.n_samples >= 2
    ok &= _line(finite, "lipschitz-probe",
                f"radius {args.probe_radius}, {est.n_samples} samples ({est.n_singular} singular), "
                f"sup|tau| = {est.bound:.6g}, L = {est.lipschitz:.6g}")

    fixture, fparams = load_chain_spec(args.fixture)
    ffield = TorqueField(fixture, fparams)
    ftheta = initial_conformation("uniform", fixture.n_joints, args.seed)
    a, b, ratio = discretization_order(ffield, ftheta, args.h, t_star=args.t_star,
                                       refinements=args.refinements, seed=args.seed)
    if not a.conclusive:
        ok &= _line(False, "discretization-bound", a.note)
    else:
        ok &= _line(a.within_bound, "discretization-bound",
                    f"max deviation {a.max_deviation:.6g} <= bound {a.bound:.6g} "
                    f"(lambda = {a.lam:.6g}, lambda' = {a.lam_prime:.6g})")
        if a.note:
            print(f"     note: {a.note}")
    ok &= _line(1.5 <= ratio <= 2.5, "discretization-order",
                f"deviation ratio h/(h/2) = {ratio:.4f}, expected in [1.5, 2.5]")

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(3):
        worst = max(worst, torque_gradient_error(ffield, rng.uniform(-math.pi, math.pi, fixture.n_joints)))
    ok &= _line(worst < 1e-5, "torque-gradient", f"max relative error {worst:.3e} < 1e-05")
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"kcmfold: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularityError, QPError, FloatingPointError) as exc:
        print(f"kcmfold: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KCMError as exc:
        print(f"kcmfold: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"kcmfold: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
