"""KCM folding iteration, its control-affine form and the bounded ODS controller.

The folding dynamics are ``theta_dot = tau(theta) + u_c`` with the torque
field ``tau = J^T F``.  The conventional KCM law picks ``u_c`` so the closed
loop follows ``tau / |tau|_inf``; the ODS controller solves a box QP per step
to get as close to that reference as the per-joint bounds ``c_i`` allow.

Time is normalised so one Euler step of size ``h`` advances one unit of
``h``; torque units on the control input are taken as-is.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .chain import ChainTopology
from .energetics import EnergyBreakdown, ForceFieldParams
from .exceptions import KCMError, SingularityError, ValidationError
from .kinetostatics import TorqueField
from .qp import BoxQP, QPSolution, lipschitz_probe, solve_box_qp

AVOGADRO = 6.022e23
ELEMENTARY_CHARGE = 1.602e-19
JOULE_TO_KCAL = 1.0 / 4184.0
# kcal/mol conversion factor for the torque bounds
C0 = AVOGADRO * ELEMENTARY_CHARGE**2 * JOULE_TO_KCAL * 1e20

PROTOCOL_MEAN_DEG = 27.7
PROTOCOL_STD_DEG = 1.1

MODES = ("conventional", "ods-qp")


class Converged(KCMError):
    """Raised when a step is requested at a zero torque vector."""


def _tau_inf(tau) -> float:
    tau = np.asarray(tau, dtype=float)
    return float(np.max(np.abs(tau))) if tau.size else 0.0


def kcm_step(theta, tau, h: float) -> np.ndarray:
    """One KCM update ``theta + h * tau / |tau|_inf``."""
    tau = np.asarray(tau, dtype=float)
    norm = _tau_inf(tau)
    if norm == 0.0:
        raise Converged("zero torque vector: nothing to step along")
    return np.asarray(theta, dtype=float) + (h / norm) * tau


def kcm_control_input(tau) -> np.ndarray:
    """``u = (1 - |tau|_inf) / |tau|_inf * tau``, so ``tau + u = tau / |tau|_inf``."""
    tau = np.asarray(tau, dtype=float)
    norm = _tau_inf(tau)
    if norm == 0.0:
        raise Converged("zero torque vector has no KCM control")
    return ((1.0 - norm) / norm) * tau


def reference_vector_field(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    norm = _tau_inf(tau)
    if norm == 0.0:
        raise Converged("zero torque vector has no reference direction")
    return tau / norm


def ods_linear_term(tau, Q) -> np.ndarray:
    """Linear term of the ODS QP, ``Q (tau - tau / |tau|_inf)``.

    Expanding ``(tau + u - ref)^T Q (tau + u - ref)`` and halving gives
    ``1/2 u^T Q u + [Q (tau - ref)]^T u`` plus a constant, so the unconstrained
    minimizer is ``u = ref - tau``, the KCM control.
    """
    tau = np.asarray(tau, dtype=float)
    return np.asarray(Q, dtype=float) @ (tau - reference_vector_field(tau))


def ods_control(tau, Q, c) -> QPSolution:
    return solve_box_qp(BoxQP(Q, ods_linear_term(tau, Q), c))


def protocol_weight(n_joints: int) -> np.ndarray:
    """``Q = sqrt(2N) I``."""
    return math.sqrt(n_joints) * np.eye(n_joints)


def protocol_bounds(n_joints: int, rho: float) -> np.ndarray:
    """``c_i = C0 * rho / sqrt(2N)`` for every joint."""
    if not rho > 0:
        raise ValidationError(f"rho must be > 0, got {rho!r}")
    return np.full(n_joints, C0 * rho / math.sqrt(n_joints))


def initial_conformation(rule: str, n_joints: int, seed: int = 0, values=None,
                         mean_deg: float = PROTOCOL_MEAN_DEG,
                         std_deg: float = PROTOCOL_STD_DEG) -> np.ndarray:
    """Starting dihedral angles (radians).

    ``"uniform"`` draws each angle from the uniform distribution with the given
    mean and standard deviation (half-width ``sqrt(3) * std``); ``"zero"`` is
    the zero-position conformation; ``"fixed"`` returns ``values``.
    """
    if rule == "zero":
        return np.zeros(n_joints)
    if rule == "uniform":
        rng = np.random.default_rng(seed)
        half = math.sqrt(3.0) * std_deg
        return np.radians(rng.uniform(mean_deg - half, mean_deg + half, size=n_joints))
    if rule == "fixed":
        if values is None:
            raise ValidationError("fixed initial rule needs explicit values")
        theta = np.asarray(values, dtype=float)
        if theta.shape != (n_joints,):
            raise ValidationError(f"fixed initial conformation must have {n_joints} angles")
        return theta.copy()
    raise ValidationError(f"unknown initial-conformation rule {rule!r}")


@dataclass(frozen=True)
class SimulationConfig:
    h: float = 0.04
    max_iter: int = 325
    threshold: float = 1e-3
    mode: str = "conventional"
    rho: float = 20.0
    bound: Optional[float] = None  # overrides the rho rule with c_i = bound
    seed: int = 0
    init_rule: str = "uniform"
    init_values: Optional[tuple] = None
    record_every: int = 1
    stall_window: int = 50
    stall_rtol: float = 1e-6

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValidationError(f"h must be > 0, got {self.h!r}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not self.threshold >= 0:
            raise ValidationError("threshold must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "ods-qp":
            if not (self.rho > 0 and math.isfinite(self.rho)):
                raise ValidationError(f"rho must be > 0, got {self.rho!r}")
            if self.bound is not None and not self.bound > 0:
                raise ValidationError(f"bound must be > 0, got {self.bound!r}")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if self.stall_window < 1:
            raise ValidationError("stall_window must be >= 1")

    def bounds(self, n_joints: int) -> Optional[np.ndarray]:
        if self.mode != "ods-qp":
            return None
        if self.bound is not None:
            return np.full(n_joints, float(self.bound))
        return protocol_bounds(n_joints, self.rho)

    def initial(self, n_joints: int) -> np.ndarray:
        return initial_conformation(self.init_rule, n_joints, self.seed, self.init_values)

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["init_values"] is not None:
            d["init_values"] = list(d["init_values"])
        return d


@dataclass(frozen=True)
class StepRecord:
    k: int
    theta: np.ndarray
    tau: np.ndarray
    tau_inf: float
    energy: EnergyBreakdown
    control: np.ndarray
    n_active: int
    wall_time: float

    @property
    def control_inf(self) -> float:
        return _tau_inf(self.control)


@dataclass
class SimulationResult:
    config: SimulationConfig
    records: list[StepRecord]
    status: str
    bounds: Optional[np.ndarray]
    final_theta: np.ndarray
    steps: int
    wall_time: float
    error: Optional[str] = None
    stall_step: Optional[int] = None
    tau_inf_history: list[float] = field(default_factory=list)

    @property
    def final(self) -> StepRecord:
        return self.records[-1]

    @property
    def max_bound_utilization(self) -> Optional[float]:
        """Largest ``|u_i| / c_i`` over all records, ods-qp mode only."""
        if self.bounds is None:
            return None
        return max(float(np.max(np.abs(r.control) / self.bounds)) for r in self.records)


def detect_stall(tau_inf_history, binding_fraction, window: int, rtol: float) -> bool:
    """True if the last ``window`` torque norms never beat the earlier best by
    ``rtol`` (relative) while at least half the bounds bound at every one of
    those steps."""
    if len(tau_inf_history) <= window:
        return False
    recent = tau_inf_history[-window:]
    earlier = min(tau_inf_history[:-window])
    if min(recent) < (1.0 - rtol) * earlier:
        return False
    return all(f >= 0.5 for f in binding_fraction[-window:])


def simulate(topology: ChainTopology, params: ForceFieldParams, config: SimulationConfig,
             theta0=None) -> SimulationResult:
    """Forward-Euler folding loop.

    Conventional mode applies ``theta + h * tau / |tau|_inf``.  ODS mode
    solves the box QP for ``u*`` and applies
    ``theta + h * v / max(1, |v|_inf)`` with ``v = tau + u*``.  Stops when
    ``|tau|_inf`` drops below the threshold, the iteration budget runs out,
    the stall detector fires or an atom pair collapses.
    """
    field_ = TorqueField(topology, params)
    n = topology.n_joints
    theta = config.initial(n) if theta0 is None else np.array(theta0, dtype=float)
    bounds = config.bounds(n)
    Q = protocol_weight(n) if config.mode == "ods-qp" else None

    records: list[StepRecord] = []
    history: list[float] = []
    binding: list[float] = []
    status = "max-iterations"
    error = None
    stall_step = None
    t_start = time.perf_counter()
    k = 0
    while True:
        t0 = time.perf_counter()
        try:
            ev = field_.evaluate(theta)
            energy = field_.energy(theta)
        except SingularityError as exc:
            status, error = "singular", f"step {k}: {exc}"
            break
        tau = ev.torques
        tau_inf = ev.tau_inf
        history.append(tau_inf)
        converged = tau_inf < config.threshold or tau_inf == 0.0

        n_active = 0
        if converged:
            control = np.zeros(n)
        elif config.mode == "conventional":
            control = kcm_control_input(tau)
        else:
            sol = ods_control(tau, Q, bounds)
            control = sol.u
            n_active = int(np.count_nonzero(sol.active))
        binding.append(n_active / n)

        last = converged or k == config.max_iter
        if k % config.record_every == 0 or last:
            records.append(StepRecord(k, theta.copy(), tau.copy(), tau_inf, energy,
                                      control.copy(), n_active, time.perf_counter() - t0))
        if converged:
            status = "converged"
            break
        if k == config.max_iter:
            break
        if config.mode == "ods-qp" and detect_stall(history, binding, config.stall_window,
                                                    config.stall_rtol):
            status, stall_step = "stalled", k
            if records[-1].k != k:
                records.append(StepRecord(k, theta.copy(), tau.copy(), tau_inf, energy,
                                          control.copy(), n_active, time.perf_counter() - t0))
            break

        if config.mode == "conventional":
            theta = kcm_step(theta, tau, config.h)
        else:
            v = tau + control
            theta = theta + config.h * v / max(1.0, _tau_inf(v))
        k += 1

    return SimulationResult(
        config=config,
        records=records,
        status=status,
        bounds=bounds,
        final_theta=theta,
        steps=k,
        wall_time=time.perf_counter() - t_start,
        error=error,
        stall_step=stall_step,
        tau_inf_history=history,
    )


def reference_euler_path(field_, theta0, h: float, n_steps: int) -> np.ndarray:
    """Euler iterates of ``theta_dot = tau / |tau|_inf``; shape ``(n_steps + 1, 2N)``."""
    path = np.empty((n_steps + 1, len(theta0)))
    path[0] = theta0
    theta = np.array(theta0, dtype=float)
    for k in range(n_steps):
        theta = kcm_step(theta, field_(theta), h)
        path[k + 1] = theta
    return path


@dataclass(frozen=True)
class DiscretizationAudit:
    h: float
    t_star: float
    n_steps: int
    refinements: int
    lam: float
    lam_prime: float
    deviations: np.ndarray
    bound: float
    conclusive: bool
    note: str = ""

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))

    @property
    def within_bound(self) -> bool:
        return self.conclusive and self.max_deviation <= self.bound


def audit_discretization(field_, theta0, h: float, t_star: float = 2.0, refinements: int = 6,
                         probe_samples: int = 48, seed: int = 0) -> DiscretizationAudit:
    """Compare the ``h``-step KCM iteration to a ``h / 2**refinements`` proxy of
    the continuous closed loop at the shared times ``h k``, and evaluate the
    error bound ``(1 + lam)/2 * (exp(t* lam') - 1) * h`` from probed constants.

    The probe ball is centred at ``theta0`` with the radius of the farthest
    visited conformation, so it covers both trajectories.
    """
    if not (h > 0 and t_star > 0) or refinements < 1:
        raise ValidationError("audit needs h > 0, t_star > 0, refinements >= 1")
    theta0 = np.asarray(theta0, dtype=float)
    n_steps = int(math.floor(t_star / h + 1e-9))
    m = 2**refinements
    try:
        coarse = reference_euler_path(field_, theta0, h, n_steps)
        fine = reference_euler_path(field_, theta0, h / m, n_steps * m)[::m]
    except (Converged, SingularityError) as exc:
        return DiscretizationAudit(h, t_star, n_steps, refinements, math.nan, math.nan,
                                   np.array([0.0]), math.nan, False, f"inconclusive: {exc}")
    deviations = np.linalg.norm(coarse - fine, axis=1)
    radius = float(max(np.max(np.linalg.norm(coarse - theta0, axis=1)),
                       np.max(np.linalg.norm(fine - theta0, axis=1))))
    est = lipschitz_probe(field_, theta0, radius, probe_samples, seed)
    with np.errstate(over="ignore"):
        bound = float((1.0 + est.bound) / 2.0 * np.expm1(t_star * est.lipschitz) * h)
    note = ""
    if not math.isfinite(bound):
        note = (f"bound is infinite: exp(t* lambda') overflows for lambda' = {est.lipschitz:.4g}, "
                "so the inequality holds without constraining the deviation")
    return DiscretizationAudit(h, t_star, n_steps, refinements, est.bound, est.lipschitz,
                               deviations, bound, True, note)


def discretization_order(field_, theta0, h: float, **kwargs):
    """Audits at ``h`` and ``h / 2`` and the ratio of their maximum deviations."""
    a = audit_discretization(field_, theta0, h, **kwargs)
    b = audit_discretization(field_, theta0, h / 2.0, **kwargs)
    ratio = a.max_deviation / b.max_deviation if b.max_deviation > 0 else math.inf
    return a, b, ratio
