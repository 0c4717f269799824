"""Certified LP and SOCP backends.

Both backends return a ``BackendResult`` whose ``certified`` flag is set only
after the solution has been checked independently of the solver's own
convergence report: primal residuals, a duality gap rebuilt from the row and
bound marginals (LP), or a gap against an outer-approximation lower bound
(SOCP).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from grrm.errors import SolverError

logger = logging.getLogger(__name__)

PRIMAL_TOLERANCE = 1e-8
# interior-point cone solvers stop near 1e-8 relative accuracy
CONE_PRIMAL_TOLERANCE = 1e-7
HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}
MAX_CUT_ROUNDS = 25


class BackendStatus(str, enum.Enum):
    optimal = "optimal"
    infeasible = "infeasible"
    unbounded = "unbounded"
    tolerance_not_met = "tolerance-not-met"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min c·x s.t. A_ub x ≤ b_ub, A_eq x = b_eq, lower ≤ x ≤ upper (±inf allowed)."""

    c: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.c)
        if self.a_ub.shape[1] != n or self.a_eq.shape[1] != n:
            raise SolverError("constraint matrices do not match the number of variables")
        if self.a_ub.shape[0] != len(self.b_ub) or self.a_eq.shape[0] != len(self.b_eq):
            raise SolverError("constraint right-hand sides do not match the row counts")
        if len(self.lower) != n or len(self.upper) != n:
            raise SolverError("bounds do not match the number of variables")
        if np.any(self.lower > self.upper):
            raise SolverError("a lower bound exceeds its upper bound")

    @property
    def size(self) -> int:
        return len(self.c)

    def primal_residual(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x``."""
        worst = 0.0
        if self.a_ub.shape[0]:
            worst = max(worst, float(np.max(self.a_ub @ x - self.b_ub, initial=0.0)))
        if self.a_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.a_eq @ x - self.b_eq))))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst

    def with_rows(self, a_extra: sp.spmatrix, b_extra: np.ndarray) -> LinearProgram:
        return replace(
            self,
            a_ub=sp.vstack([self.a_ub, a_extra]).tocsr(),
            b_ub=np.concatenate([self.b_ub, b_extra]),
        )


@dataclass(frozen=True)
class Cone:
    """‖G x − offset‖₂ ≤ x[epigraph]."""

    epigraph: int
    matrix: sp.csr_matrix
    offset: np.ndarray

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x - self.offset

    def violation(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(x)) - x[self.epigraph])

    def cut(self, direction: np.ndarray, size: int) -> tuple[sp.csr_matrix, float]:
        """Row of the valid inequality u·(G x − offset) − x[epigraph] ≤ 0 for ‖u‖ ≤ 1."""
        norm = np.linalg.norm(direction)
        if norm > 1.0:
            direction = direction / norm
        row = sp.csr_matrix(direction @ self.matrix)
        row = row - sp.csr_matrix(([1.0], ([0], [self.epigraph])), shape=(1, size))
        return row, float(direction @ self.offset)


@dataclass(frozen=True, eq=False)
class BackendResult:
    status: BackendStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    lower_bound: float = float("nan")
    gap: float = float("inf")
    primal_residual: float = float("inf")
    iterations: int = 0
    message: str = ""
    certified: bool = False
    extras: dict = field(default_factory=dict)


def _bounds(lp: LinearProgram) -> list[tuple[float | None, float | None]]:
    return [
        (None if np.isneginf(lo) else float(lo), None if np.isposinf(up) else float(up))
        for lo, up in zip(lp.lower, lp.upper)
    ]


def _dual_objective(lp: LinearProgram, res) -> tuple[float, float, float]:
    """Dual objective, stationarity residual and sign violation from HiGHS marginals."""
    y_ub = np.asarray(res.ineqlin.marginals) if lp.a_ub.shape[0] else np.zeros(0)
    y_eq = np.asarray(res.eqlin.marginals) if lp.a_eq.shape[0] else np.zeros(0)
    y_lo = np.asarray(res.lower.marginals)
    y_up = np.asarray(res.upper.marginals)

    finite_lo = np.isfinite(lp.lower)
    finite_up = np.isfinite(lp.upper)
    dual = float(lp.b_ub @ y_ub + lp.b_eq @ y_eq)
    dual += float(lp.lower[finite_lo] @ y_lo[finite_lo]) + float(lp.upper[finite_up] @ y_up[finite_up])

    stationarity = lp.c - lp.a_ub.T @ y_ub - lp.a_eq.T @ y_eq - y_lo - y_up
    signs = max(
        float(np.max(y_ub, initial=0.0)),
        float(np.max(-y_lo, initial=0.0)),
        float(np.max(y_up, initial=0.0)),
    )
    return dual, float(np.max(np.abs(stationarity), initial=0.0)), signs


def solve_lp(lp: LinearProgram, tolerance: float = 1e-6, max_iter: int | None = None) -> BackendResult:
    options = dict(HIGHS_OPTIONS)
    if max_iter is not None:
        options["maxiter"] = max_iter
    res = linprog(
        lp.c,
        A_ub=lp.a_ub if lp.a_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.a_ub.shape[0] else None,
        A_eq=lp.a_eq if lp.a_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.a_eq.shape[0] else None,
        bounds=_bounds(lp),
        method="highs",
        options=options,
    )
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return BackendResult(BackendStatus.infeasible, message=res.message, iterations=iterations)
    if res.status == 3:
        return BackendResult(BackendStatus.unbounded, message=res.message, iterations=iterations)
    if res.status != 0 or res.x is None:
        logger.warning("LP backend stopped with status %s: %s", res.status, res.message)
        return BackendResult(BackendStatus.tolerance_not_met, message=res.message, iterations=iterations)

    x = np.asarray(res.x)
    objective = float(lp.c @ x)
    residual = lp.primal_residual(x)
    dual, stationarity, signs = _dual_objective(lp, res)
    gap = abs(objective - dual)
    scale = 1.0 + abs(objective)
    certified = (
        residual <= PRIMAL_TOLERANCE
        and gap <= tolerance * scale
        and stationarity <= tolerance * scale
        and signs <= tolerance
    )
    if not certified:
        logger.warning(
            "LP certificate failed: residual=%.2e gap=%.2e stationarity=%.2e sign=%.2e",
            residual, gap, stationarity, signs,
        )
    return BackendResult(
        BackendStatus.optimal if certified else BackendStatus.tolerance_not_met,
        x=x,
        objective=objective,
        lower_bound=dual,
        gap=gap,
        primal_residual=residual,
        iterations=iterations,
        message=res.message,
        certified=certified,
    )


def _cvxpy_status(status: str) -> BackendStatus | None:
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return BackendStatus.infeasible
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return BackendStatus.unbounded
    if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return None
    return BackendStatus.tolerance_not_met


def _dual_directions(constraint) -> list[np.ndarray]:
    """±z/t from the cone multiplier (t, z); empty when the solver gave none."""
    value = constraint.dual_value
    if value is None or not isinstance(value, (list, tuple)) or len(value) != 2:
        return []
    t = float(np.asarray(value[0]).reshape(-1)[0])
    z = np.asarray(value[1], dtype=float).reshape(-1)
    if t <= 0 or not np.all(np.isfinite(z)):
        return []
    u = z / t
    return [u, -u]


def _repair(x: np.ndarray, cones: tuple[Cone, ...]) -> np.ndarray:
    """Lift every cone epigraph to the exact norm so the point is cone-feasible."""
    x = x.copy()
    for cone in cones:
        x[cone.epigraph] = max(x[cone.epigraph], float(np.linalg.norm(cone.residual(x))))
    return x


def _cut_rows(cone: Cone, directions: list[np.ndarray], size: int):
    rows, rhs = [], []
    for u in directions:
        row, b = cone.cut(u, size)
        rows.append(row)
        rhs.append(b)
    return rows, rhs


def solve_socp(
    lp: LinearProgram, cones: tuple[Cone, ...], tolerance: float = 1e-6
) -> BackendResult:
    """Solve the LP part plus second-order cones with cvxpy, then certify with LP cuts.

    The cut LP replaces each cone by supporting half-spaces
    x[epigraph] ≥ u·(G x − offset), ‖u‖ ≤ 1, so its optimum is a lower bound on
    the cone program; the repaired cvxpy point gives the upper bound.
    """
    n = lp.size
    x = cp.Variable(n)
    constraints = []
    if lp.a_ub.shape[0]:
        constraints.append(cp.Constant(lp.a_ub) @ x <= lp.b_ub)
    if lp.a_eq.shape[0]:
        constraints.append(cp.Constant(lp.a_eq) @ x == lp.b_eq)
    finite_lo = np.flatnonzero(np.isfinite(lp.lower))
    finite_up = np.flatnonzero(np.isfinite(lp.upper))
    if finite_lo.size:
        constraints.append(x[finite_lo] >= lp.lower[finite_lo])
    if finite_up.size:
        constraints.append(x[finite_up] <= lp.upper[finite_up])
    soc = [cp.SOC(x[cone.epigraph], cp.Constant(cone.matrix) @ x - cone.offset) for cone in cones]
    prob = cp.Problem(cp.Minimize(lp.c @ x), constraints + soc)
    try:
        prob.solve()
    except cp.error.SolverError as exc:
        logger.warning("cone solver failed: %s", exc)
        return BackendResult(BackendStatus.tolerance_not_met, message=str(exc))

    failed = _cvxpy_status(prob.status)
    if failed is not None:
        return BackendResult(failed, message=str(prob.status))

    point = _repair(np.asarray(x.value, dtype=float), cones)
    upper = float(lp.c @ point)
    residual = lp.primal_residual(point)

    rows, rhs = [], []
    for cone, constraint in zip(cones, soc):
        r = cone.residual(point)
        k = r.size
        directions = list(np.eye(k)) + list(-np.eye(k))
        if np.linalg.norm(r) > 0:
            directions.append(r / np.linalg.norm(r))
        directions.extend(_dual_directions(constraint))
        cone_rows, cone_rhs = _cut_rows(cone, directions, n)
        rows.extend(cone_rows)
        rhs.extend(cone_rhs)

    relaxed = lp.with_rows(sp.vstack(rows), np.array(rhs))
    lower = -np.inf
    rounds = 0
    for rounds in range(1, MAX_CUT_ROUNDS + 1):
        bound = solve_lp(relaxed, tolerance)
        if not bound.certified:
            logger.warning("cut LP ended with status %s", bound.status.value)
            break
        lower = max(lower, bound.objective)

        # repaired cut-LP points are exactly feasible on the linear rows
        candidate = _repair(bound.x, cones)
        value = float(lp.c @ candidate)
        if value < upper or (residual > CONE_PRIMAL_TOLERANCE and value <= upper + tolerance):
            point, upper = candidate, value
            residual = lp.primal_residual(point)
        if upper - lower <= tolerance * (1.0 + abs(upper)):
            break

        new_rows, new_rhs = [], []
        for cone in cones:
            r = cone.residual(bound.x)
            norm = np.linalg.norm(r)
            if norm - bound.x[cone.epigraph] > 1e-12:
                row, b = cone.cut(r / norm, n)
                new_rows.append(row)
                new_rhs.append(b)
        if not new_rows:
            break
        relaxed = relaxed.with_rows(sp.vstack(new_rows), np.array(new_rhs))

    gap = upper - lower
    certified = residual <= CONE_PRIMAL_TOLERANCE and gap <= tolerance * (1.0 + abs(upper))
    if not certified:
        logger.warning("cone certificate failed: gap=%.2e residual=%.2e after %d rounds", gap, residual, rounds)
    return BackendResult(
        BackendStatus.optimal if certified else BackendStatus.tolerance_not_met,
        x=point,
        objective=upper,
        lower_bound=lower,
        gap=gap,
        primal_residual=residual,
        iterations=rounds,
        message=str(prob.status),
        certified=certified,
        extras={"cut_rounds": rounds},
    )
