from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from grrm.errors import SchemeError, SolverError
from grrm.finite import (
    SIGNED_TOLERANCE,
    Distribution,
    LossMatrix,
    SignedMeasure,
)
from grrm.objective import NormChoice, Statistic, discrepancy, general_entropy, indicator_statistic
from grrm.schemes import BridgeTriple, SupervisionScheme, scheme
from grrm.solver.backends import BackendStatus, LinearProgram, solve_lp, solve_socp
from grrm.solver.program import ConvexProgram, GrrmProblem, assemble_program
from grrm.transitions import apply, identity

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-6


class SolveStatus(str, enum.Enum):
    optimal = "optimal"
    infeasible = "infeasible"
    unbounded = "unbounded"
    tolerance_not_met = "tolerance-not-met"


@dataclass(frozen=True, eq=False)
class GrrmSolution:
    status: SolveStatus
    q_star: Distribution | None = None
    witnesses: tuple[Distribution, ...] = ()
    objective: float = float("nan")
    discrepancy_terms: tuple[float, ...] = ()
    entropy: float = float("nan")
    residuals: tuple[float, ...] = ()
    gap: float = float("inf")
    support_restricted: bool = False
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.optimal

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "entropy": self.entropy,
            "discrepancies": list(self.discrepancy_terms),
            "feasibility_residuals": list(self.residuals),
            "gap": self.gap,
            "support_restricted": self.support_restricted,
            "message": self.message,
        }


@dataclass(frozen=True)
class UncertaintySpec:
    """Radius ε of 𝓤 = {Q : Σ_i w_i ψ(T_i(Q), T̃_i(P̃_{e_i})) < ε}."""

    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise SolverError(f"uncertainty radius must be positive, got {self.radius}")


def _as_distribution(mass: np.ndarray, space, slack: float) -> Distribution:
    """Clip and renormalize solver output that is a distribution up to ``slack``."""
    if mass.min() < -slack:
        raise SolverError(f"solver returned mass {mass.min():.3e} below zero")
    if abs(mass.sum() - 1.0) > slack:
        raise SolverError(f"solver mass sums to {mass.sum()!r}")
    mass = np.clip(mass, 0.0, None)
    return Distribution(space, mass / mass.sum())


def _backend(program: ConvexProgram, tolerance: float):
    if program.is_linear:
        return solve_lp(program.linear, tolerance)
    return solve_socp(program.linear, program.cones, tolerance)


def _certified_solution(problem: GrrmProblem, program: ConvexProgram, result) -> GrrmSolution:
    s = problem.scheme
    layout = program.layout
    slack = SIGNED_TOLERANCE if program.is_linear else max(SIGNED_TOLERANCE, result.primal_residual)
    try:
        q_star = _as_distribution(result.x[layout.q], s.test_space, slack)
        witnesses = tuple(
            _as_distribution(result.x[block], triple.training_space, slack)
            for block, triple in zip(layout.witnesses, s.triples)
        )
    except SolverError as exc:
        return GrrmSolution(SolveStatus.tolerance_not_met, message=str(exc))

    residuals = tuple(
        float(np.max(np.abs(apply(t.test_to_bridge, q_star).mass - apply(t.train_to_bridge, w).mass)))
        for t, w in zip(s.triples, witnesses)
    )
    terms = tuple(
        discrepancy(apply(t.test_to_bridge, q_star), t.bridged_data(), stat, problem.norm)
        for t, stat in zip(s.triples, problem.statistics)
    )
    entropy = general_entropy(q_star, s.loss)
    recomputed = float(s.weights @ np.array(terms)) - problem.lam * entropy

    status = SolveStatus.optimal
    message = result.message
    if max(residuals) > FEASIBILITY_TOLERANCE:
        status, message = SolveStatus.tolerance_not_met, f"feasibility residual {max(residuals):.2e}"
    elif abs(recomputed - result.objective) > 10 * problem.tolerance * (1.0 + abs(result.objective)):
        status = SolveStatus.tolerance_not_met
        message = f"objective {result.objective!r} disagrees with recomputed {recomputed!r}"
    if status is not SolveStatus.optimal:
        logger.warning("solution rejected: %s", message)

    return GrrmSolution(
        status=status,
        q_star=q_star,
        witnesses=witnesses,
        objective=result.objective,
        discrepancy_terms=terms,
        entropy=entropy,
        residuals=residuals,
        gap=result.gap,
        support_restricted=not bool(program.support.all()),
        message=message,
        extras=dict(result.extras, backend_iterations=result.iterations),
    )


def solve(problem: GrrmProblem) -> GrrmSolution:
    """Minimize Σ_i w_i ψ_i(T_i(Q)) − λ H(Q) over the feasible set 𝓕."""
    program = assemble_program(problem)
    result = _backend(program, problem.tolerance)
    if result.status is BackendStatus.infeasible and not program.support.all():
        logger.warning("restricted feature support is infeasible; retrying on the full support")
        program = assemble_program(problem, restrict_support=False)
        result = _backend(program, problem.tolerance)

    if result.status is BackendStatus.infeasible:
        probe = feasibility_probe(problem.scheme)
        logger.warning(
            "GRRM program infeasible (product-of-uniforms probe %s)", "feasible" if probe else "infeasible"
        )
        return GrrmSolution(SolveStatus.infeasible, message=result.message, extras={"uniform_probe": probe})
    if result.status is BackendStatus.unbounded:
        return GrrmSolution(SolveStatus.unbounded, message=result.message)
    if result.x is None:
        return GrrmSolution(SolveStatus.tolerance_not_met, message=result.message)

    solution = _certified_solution(problem, program, result)
    if result.status is not BackendStatus.optimal and solution.is_optimal:
        # an uncertified backend point never counts as optimal
        return replace(solution, status=SolveStatus.tolerance_not_met, message=result.message)
    logger.debug(
        "solved: status=%s objective=%.6g entropy=%.6g gap=%.2e",
        solution.status.value, solution.objective, solution.entropy, solution.gap,
    )
    return solution


def solve_rrm(
    empirical: Distribution,
    lam: float,
    statistic: Statistic | None = None,
    norm: NormChoice = NormChoice.max_abs,
    loss: LossMatrix | None = None,
    **options,
) -> GrrmSolution:
    """RRM: GRRM with the single triple T = T̃ = I on the empirical distribution."""
    space = empirical.space
    eye = identity(space)
    triple = BridgeTriple(space, space, eye, eye, empirical, kind="standard")
    statistic = statistic if statistic is not None else indicator_statistic(space)
    problem = GrrmProblem(scheme(space, [triple], loss), lam, (statistic,), norm, **options)
    return solve(problem)


def weighted_discrepancy(q: Distribution, problem: GrrmProblem) -> float:
    s = problem.scheme
    if q.space != s.test_space:
        raise SolverError("distribution is not over the scheme's test space")
    return float(
        sum(
            t.weight * discrepancy(apply(t.test_to_bridge, q), t.bridged_data(), stat, problem.norm)
            for t, stat in zip(s.triples, problem.statistics)
        )
    )


def uncertainty_membership(q: Distribution, problem: GrrmProblem, spec: UncertaintySpec) -> bool:
    return weighted_discrepancy(q, problem) < spec.radius


def feasibility_probe(s: SupervisionScheme) -> bool:
    """Does the product of uniform feature and label distributions lie in 𝓕?"""
    uniform = np.kron(
        np.full(len(s.feature_space), 1.0 / len(s.feature_space)),
        np.full(len(s.label_space), 1.0 / len(s.label_space)),
    )
    for triple in s.triples:
        target = triple.test_to_bridge.kernel.T @ uniform
        k = triple.train_to_bridge.kernel
        n = len(triple.training_space)
        lp = LinearProgram(
            c=np.zeros(n),
            a_ub=_empty(n),
            b_ub=np.zeros(0),
            a_eq=_stack(k.T, np.ones((1, n))),
            b_eq=np.concatenate([target, [1.0]]),
            lower=np.zeros(n),
            upper=np.ones(n),
        )
        result = solve_lp(lp)
        if result.status is BackendStatus.infeasible:
            logger.info("triple %s cannot match the product-of-uniforms test distribution", triple.kind)
            return False
    return True


def _empty(n: int) -> sp.csr_matrix:
    return sp.csr_matrix((0, n))


def _stack(*blocks) -> sp.csr_matrix:
    return sp.vstack([sp.csr_matrix(b) for b in blocks]).tocsr()


@dataclass(frozen=True, eq=False)
class BackprojectionReport:
    measure: SignedMeasure
    negative_entries: dict
    minimum: float

    @property
    def has_negative_mass(self) -> bool:
        return bool(self.negative_entries)


def erm_backprojection(triple: BridgeTriple) -> BackprojectionReport:
    """Solve T(Q) = P̃_e exactly for a signed Q when T̃ = I and T is invertible."""
    if not triple.train_to_bridge.is_identity():
        raise SchemeError("back-projection needs an identity training transformation")
    kernel = triple.test_to_bridge.kernel
    if kernel.shape[0] != kernel.shape[1]:
        raise SolverError(f"test transformation is not square: {kernel.shape}")
    if np.linalg.cond(kernel) > 1e12:
        raise SolverError("test transformation is not invertible")
    try:
        mass = np.linalg.solve(kernel.T, triple.bridged_data().mass)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"test transformation is not invertible: {exc}") from None
    measure = SignedMeasure(triple.test_space, mass)
    negatives = measure.negative_entries(SIGNED_TOLERANCE)
    minimum = float(mass.min())
    if negatives:
        logger.info("back-projected ERM measure has %d negative entries (min %.4g)", len(negatives), minimum)
    return BackprojectionReport(measure, negatives, minimum)
