"""Box-constrained convex QP, the box feasibility LP and a Lipschitz probe."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .exceptions import KCMError, SingularityError, ValidationError

SYMMETRY_TOL = 1e-12
BOUND_TOL = 1e-9
KKT_TOL = 1e-8


class QPError(KCMError):
    pass


@dataclass(frozen=True)
class BoxQP:
    """``min 1/2 u^T Q u + g^T u`` subject to ``|u_i| <= c_i``."""

    Q: np.ndarray
    g: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = g.shape[0]
        if Q.shape != (n, n) or c.shape != (n,) or g.ndim != 1:
            raise ValidationError(f"inconsistent QP shapes Q{Q.shape} g{g.shape} c{c.shape}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))):
            raise ValidationError("QP data must be finite")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(Q))):
            raise ValidationError("Q must be symmetric")
        if np.any(c <= 0):
            raise ValidationError("bounds c_i must be > 0")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c", c)

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.Q @ u + self.g @ u)


@dataclass(frozen=True)
class QPSolution:
    u: np.ndarray
    objective: float
    active: np.ndarray  # bool mask, bound binds
    iterations: int


def solve_box_qp(problem: BoxQP, max_iter: int | None = None) -> QPSolution:
    """Primal active-set method started from the feasible origin.

    The working set holds coordinates fixed at one of their bounds.  Each
    iteration solves the equality-constrained subproblem on the free
    coordinates, takes the longest feasible step toward it and either adds the
    blocking bound or, at a subproblem optimum, drops the bound with the most
    negative multiplier.  Terminates at the unique minimizer for SPD ``Q``.
    """
    Q, g, c = problem.Q, problem.g, problem.c
    n = len(g)
    try:
        scipy.linalg.cholesky(Q, lower=True)
    except np.linalg.LinAlgError:
        raise QPError("Q is not positive definite") from None

    if max_iter is None:
        max_iter = 10 * n + 50
    x = np.zeros(n)
    side = np.zeros(n, dtype=int)  # -1 lower bound, +1 upper bound, 0 free
    iterations = 0
    while True:
        iterations += 1
        if iterations > max_iter:
            raise QPError(f"active-set solver did not converge in {max_iter} iterations")
        free = side == 0
        target = x.copy()
        if np.any(free):
            fixed = ~free
            rhs = -(g[free] + Q[np.ix_(free, fixed)] @ x[fixed])
            Qff = Q[np.ix_(free, free)]
            target[free] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Qff), rhs)
        step = target - x

        if np.max(np.abs(step), initial=0.0) <= 1e-15 * max(1.0, np.max(np.abs(c))):
            grad = Q @ x + g
            # multiplier of an active bound is -side * grad; must be >= 0
            mult = np.where(side != 0, -side * grad, np.inf)
            worst = int(np.argmin(mult))
            if side[worst] == 0 or mult[worst] >= -KKT_TOL * max(1.0, np.max(np.abs(grad))):
                break
            side[worst] = 0
            continue

        alpha = 1.0
        blocking = -1
        for i in np.flatnonzero(free & (step != 0)):
            limit = c[i] if step[i] > 0 else -c[i]
            a = (limit - x[i]) / step[i]
            if a < alpha:
                alpha, blocking = a, i
        x = x + alpha * step
        if blocking >= 0:
            side[blocking] = 1 if step[blocking] > 0 else -1
            x[blocking] = c[blocking] * side[blocking]
        else:
            x = target

    x = np.clip(x, -c, c)
    # a minimizer landing on a bound up to rounding counts as active
    active = np.abs(x) >= c * (1.0 - 8 * np.finfo(float).eps)
    x[active] = np.copysign(c[active], x[active])
    return QPSolution(u=x, objective=problem.objective(x), active=active, iterations=iterations)


@dataclass(frozen=True)
class FeasibilityCertificate:
    omega: float
    u: np.ndarray
    w: float

    @property
    def satisfied(self) -> bool:
        return self.omega > 0


def box_constraint_system(c) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``A = [e_1; -e_1; e_2; -e_2; ...]`` and ``[c_1, c_1, ..., c_n, c_n]``."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    A = np.zeros((2 * n, n))
    A[0::2] = np.eye(n)
    A[1::2] = -np.eye(n)
    return A, np.repeat(c, 2)


def lp_feasibility_omega(c) -> FeasibilityCertificate:
    """Largest ``w`` with ``A u + w * 1 <= c`` for the stacked box system."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        raise ValidationError("bounds vector is empty")
    if not np.all(np.isfinite(c)):
        raise ValidationError("bounds must be finite")
    n = len(c)
    A, rhs = box_constraint_system(c)
    A_ub = np.hstack([A, np.ones((2 * n, 1))])
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=A_ub, b_ub=rhs, bounds=[(None, None)] * (n + 1), method="highs")
    if res.status != 0:
        raise QPError(f"feasibility LP failed: {res.message}")
    u, w = res.x[:n], float(res.x[-1]) + 0.0  # no -0.0
    return FeasibilityCertificate(omega=w, u=u, w=w)


@dataclass(frozen=True)
class LipschitzEstimate:
    bound: float  # max |tau| over the samples
    lipschitz: float  # max |d tau| / |d theta| over sample pairs
    n_samples: int
    n_singular: int


def lipschitz_probe(torque_field: Callable[[np.ndarray], np.ndarray], theta, radius: float,
                    samples: int, seed: int = 0) -> LipschitzEstimate:
    """Sample the ball of ``radius`` around ``theta`` (Euclidean) and estimate
    the sup of ``|tau|`` and the Lipschitz constant of ``tau``.

    The centre is always the first sample, and samples are drawn one at a time
    so a larger ``samples`` extends the same sequence.  Conformations where the
    field raises :class:`SingularityError` are counted and skipped.
    """
    if not radius > 0:
        raise ValidationError("radius must be > 0")
    if samples < 2:
        raise ValidationError("need at least 2 samples")
    theta = np.asarray(theta, dtype=float)
    dim = theta.size
    rng = np.random.default_rng(seed)

    points, values = [], []
    n_singular = 0
    for s in range(samples):
        if s == 0:
            p = theta.copy()
        else:
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            p = theta + radius * rng.uniform() ** (1.0 / dim) * direction
        try:
            values.append(np.asarray(torque_field(p), dtype=float))
            points.append(p)
        except SingularityError:
            n_singular += 1

    bound = max((float(np.linalg.norm(v)) for v in values), default=0.0)
    lip = 0.0
    for a in range(len(points)):
        for b in range(a):
            dist = np.linalg.norm(points[a] - points[b])
            if dist > 0:
                lip = max(lip, float(np.linalg.norm(values[a] - values[b]) / dist))
    return LipschitzEstimate(bound=bound, lipschitz=lip, n_samples=len(points), n_singular=n_singular)
