"""Assembly of the penalized GRRM program into LP / SOCP data.

Variables, in order: Q over 𝒵, one witness Q̃_i per triple, one entropy
epigraph scalar m_x per feature, one norm epigraph scalar s_i per triple and,
for the sum-abs norm only, the absolute-value splits u_i. The objective is
Σ_i w_i s_i + λ Σ_x m_x, where m_x ≥ −Σ_y L(ŷ, y) Q(x, y) for every ŷ makes
λ Σ_x m_x = −λ H(Q) at the optimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from grrm.errors import SolverError
from grrm.finite import Distribution
from grrm.objective import NormChoice, Statistic, StatisticChoice, statistic_for
from grrm.schemes import SupervisionScheme
from grrm.solver.backends import Cone, LinearProgram

logger = logging.getLogger(__name__)

SMALL_LAMBDA = 1e-9


@dataclass(frozen=True, eq=False)
class GrrmProblem:
    scheme: SupervisionScheme
    lam: float
    statistics: tuple[Statistic, ...]
    norm: NormChoice = NormChoice.max_abs
    marginal_pin: Distribution | None = None
    tolerance: float = 1e-6
    restrict_support: bool = True

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise SolverError(f"lambda must be positive, got {self.lam}")
        if self.lam < SMALL_LAMBDA:
            logger.warning("lambda=%g is below %g; the minimizer may not be unique", self.lam, SMALL_LAMBDA)
        if not self.tolerance > 0:
            raise SolverError("solver tolerance must be positive")
        statistics = tuple(self.statistics)
        if len(statistics) != len(self.scheme.triples):
            raise SolverError(f"{len(statistics)} statistics for {len(self.scheme.triples)} triples")
        for i, (t, triple) in enumerate(zip(statistics, self.scheme.triples)):
            if t.space != triple.bridge_space:
                raise SolverError(f"statistic {i} does not live on the bridge space of triple {i}")
        if self.marginal_pin is not None and self.marginal_pin.space != self.scheme.feature_space:
            raise SolverError("marginal pin must be a distribution over the test features")
        object.__setattr__(self, "statistics", statistics)
        object.__setattr__(self, "norm", NormChoice(self.norm))

    @classmethod
    def build(
        cls,
        scheme: SupervisionScheme,
        lam: float,
        statistic: StatisticChoice | str = StatisticChoice.indicator,
        **options,
    ) -> GrrmProblem:
        """Problem with the named statistic on every bridge space."""
        statistics = tuple(statistic_for(t.bridge_space, statistic) for t in scheme.triples)
        return cls(scheme, lam, statistics, **options)


@dataclass(frozen=True)
class VariableLayout:
    q: slice
    witnesses: tuple[slice, ...]
    epigraph: slice
    norm_epigraph: tuple[int, ...]
    auxiliary: tuple[slice, ...]
    size: int

    def names(self) -> list[str]:
        names = [""] * self.size
        for k in range(self.q.start, self.q.stop):
            names[k] = f"q_{k - self.q.start}"
        for i, block in enumerate(self.witnesses):
            for k in range(block.start, block.stop):
                names[k] = f"w{i}_{k - block.start}"
        for k in range(self.epigraph.start, self.epigraph.stop):
            names[k] = f"m_{k - self.epigraph.start}"
        for i, k in enumerate(self.norm_epigraph):
            names[k] = f"s_{i}"
        for i, block in enumerate(self.auxiliary):
            for k in range(block.start, block.stop):
                names[k] = f"u{i}_{k - block.start}"
        return names


@dataclass(frozen=True, eq=False)
class ConvexProgram:
    linear: LinearProgram
    cones: tuple[Cone, ...]
    layout: VariableLayout
    support: np.ndarray

    @property
    def is_linear(self) -> bool:
        return not self.cones


def feature_support(scheme: SupervisionScheme) -> np.ndarray:
    """Test features that can reach a bridge element carrying data in some triple."""
    n_x, n_y = len(scheme.feature_space), len(scheme.label_space)
    reachable = np.zeros(len(scheme.test_space), dtype=bool)
    for triple in scheme.triples:
        observed = triple.bridged_data().mass > 0
        reachable |= (triple.test_to_bridge.kernel[:, observed] > 0).any(axis=1)
    return reachable.reshape(n_x, n_y).any(axis=1)


def _place(matrix, start: int, size: int) -> sp.csr_matrix:
    block = sp.coo_matrix(matrix)
    return sp.csr_matrix((block.data, (block.row, block.col + start)), shape=(block.shape[0], size))


def _unit_column(rows: int, column: int, size: int, value: float = 1.0) -> sp.csr_matrix:
    return sp.csr_matrix(
        (np.full(rows, value), (np.arange(rows), np.full(rows, column))), shape=(rows, size)
    )


def _layout(problem: GrrmProblem) -> VariableLayout:
    scheme = problem.scheme
    cursor = len(scheme.test_space)
    q = slice(0, cursor)
    witnesses = []
    for triple in scheme.triples:
        witnesses.append(slice(cursor, cursor + len(triple.training_space)))
        cursor += len(triple.training_space)
    epigraph = slice(cursor, cursor + len(scheme.feature_space))
    cursor = epigraph.stop
    norm_epigraph = tuple(range(cursor, cursor + len(scheme.triples)))
    cursor += len(scheme.triples)
    auxiliary = []
    for t in problem.statistics:
        width = t.dim if problem.norm is NormChoice.sum_abs else 0
        auxiliary.append(slice(cursor, cursor + width))
        cursor += width
    return VariableLayout(q, tuple(witnesses), epigraph, norm_epigraph, tuple(auxiliary), cursor)


def assemble_program(problem: GrrmProblem, restrict_support: bool | None = None) -> ConvexProgram:
    scheme = problem.scheme
    restrict = problem.restrict_support if restrict_support is None else restrict_support
    layout = _layout(problem)
    size = layout.size
    n_x, n_y = len(scheme.feature_space), len(scheme.label_space)
    loss = scheme.loss.values

    c = np.zeros(size)
    c[list(layout.norm_epigraph)] = scheme.weights
    c[layout.epigraph] = problem.lam

    ub_rows: list[sp.csr_matrix] = []
    ub_rhs: list[np.ndarray] = []
    eq_rows: list[sp.csr_matrix] = []
    eq_rhs: list[np.ndarray] = []
    cones: list[Cone] = []

    # m_x ≥ −Σ_y L(ŷ, y) Q(x, y) for every candidate ŷ
    minus_m = _place(-sp.identity(n_x), layout.epigraph.start, size)
    for yhat in range(loss.shape[0]):
        costs = sp.kron(sp.identity(n_x), sp.csr_matrix(loss[yhat : yhat + 1, :]))
        ub_rows.append(_place(-costs, layout.q.start, size) + minus_m)
        ub_rhs.append(np.zeros(n_x))

    eq_rows.append(_place(np.ones((1, len(scheme.test_space))), layout.q.start, size))
    eq_rhs.append(np.ones(1))

    for i, (triple, t) in enumerate(zip(scheme.triples, problem.statistics)):
        witness = layout.witnesses[i]
        k_test = triple.test_to_bridge.kernel
        k_train = triple.train_to_bridge.kernel

        # 𝓕: T_i(Q) = T̃_i(Q̃_i)
        eq_rows.append(
            _place(sp.csr_matrix(k_test.T), layout.q.start, size)
            - _place(sp.csr_matrix(k_train.T), witness.start, size)
        )
        eq_rhs.append(np.zeros(len(triple.bridge_space)))
        eq_rows.append(_place(np.ones((1, len(triple.training_space))), witness.start, size))
        eq_rhs.append(np.ones(1))

        gram = sp.csr_matrix((k_test @ t.values).T)
        target = t.values.T @ triple.bridged_data().mass
        rows = t.dim
        s = layout.norm_epigraph[i]
        g = _place(gram, layout.q.start, size)
        if problem.norm is NormChoice.max_abs:
            ub_rows += [g - _unit_column(rows, s, size), -g - _unit_column(rows, s, size)]
            ub_rhs += [target, -target]
        elif problem.norm is NormChoice.sum_abs:
            u = _place(sp.identity(rows), layout.auxiliary[i].start, size)
            ub_rows += [g - u, -g - u]
            ub_rhs += [target, -target]
            total = _place(np.ones((1, rows)), layout.auxiliary[i].start, size) - _unit_column(1, s, size)
            ub_rows.append(total)
            ub_rhs.append(np.zeros(1))
        else:
            cones.append(Cone(s, g, target))

    if problem.marginal_pin is not None:
        eq_rows.append(_place(sp.kron(sp.identity(n_x), np.ones((1, n_y))), layout.q.start, size))
        eq_rhs.append(np.asarray(problem.marginal_pin.mass))

    lower = np.full(size, -np.inf)
    upper = np.full(size, np.inf)
    lower[layout.q] = 0.0
    upper[layout.q] = 1.0
    for block in layout.witnesses:
        lower[block] = 0.0
        upper[block] = 1.0
    lower[list(layout.norm_epigraph)] = 0.0
    for block in layout.auxiliary:
        lower[block] = 0.0

    support = feature_support(scheme) if restrict else np.ones(n_x, dtype=bool)
    if restrict and not support.all():
        hidden = np.repeat(~support, n_y)
        upper[layout.q.start : layout.q.stop][hidden] = 0.0
        logger.debug("restricted Q to %d of %d features", int(support.sum()), n_x)

    linear = LinearProgram(
        c=c,
        a_ub=sp.vstack(ub_rows).tocsr(),
        b_ub=np.concatenate(ub_rhs),
        a_eq=sp.vstack(eq_rows).tocsr(),
        b_eq=np.concatenate(eq_rhs),
        lower=lower,
        upper=upper,
    )
    return ConvexProgram(linear, tuple(cones), layout, support)


def _terms(row: sp.csr_matrix, names: Sequence[str]) -> str:
    parts = []
    for column, value in zip(row.indices, row.data):
        if value == 0:
            continue
        sign = "-" if value < 0 else "+"
        parts.append(f"{sign} {abs(value):.17g} {names[column]}")
    if not parts:
        return "0 " + names[0]
    lines = [" ".join(parts[k : k + 6]) for k in range(0, len(parts), 6)]
    return "\n   ".join(lines)


def to_lp_format(program: ConvexProgram) -> str:
    """CPLEX-LP text; each cone becomes defining rows plus one quadratic constraint."""
    lp = program.linear
    names = program.layout.names()
    out = ["\\ GRRM program", "Minimize", " obj: " + _terms(sp.csr_matrix(lp.c), names), "Subject To"]
    a_ub = lp.a_ub.tocsr()
    for r in range(a_ub.shape[0]):
        out.append(f" ub_{r}: {_terms(a_ub[r], names)} <= {lp.b_ub[r]:.17g}")
    a_eq = lp.a_eq.tocsr()
    for r in range(a_eq.shape[0]):
        out.append(f" eq_{r}: {_terms(a_eq[r], names)} = {lp.b_eq[r]:.17g}")

    extra = []
    for i, cone in enumerate(program.cones):
        residual_names = [f"r{i}_{j}" for j in range(cone.matrix.shape[0])]
        for j, rname in enumerate(residual_names):
            row = _terms(cone.matrix.tocsr()[j], names)
            out.append(f" soc{i}_def{j}: {row} - 1 {rname} = {cone.offset[j]:.17g}")
        squares = " + ".join(f"{n} ^2" for n in residual_names)
        out.append(f" soc{i}: [ {squares} - {names[cone.epigraph]} ^2 ] <= 0")
        extra += residual_names

    out.append("Bounds")
    for k, name in enumerate(names):
        lo, up = lp.lower[k], lp.upper[k]
        if np.isinf(lo) and np.isinf(up):
            out.append(f" {name} free")
        elif np.isinf(up):
            out.append(f" {name} >= {lo:.17g}")
        else:
            lo_text = "-inf" if np.isinf(lo) else f"{lo:.17g}"
            out.append(f" {lo_text} <= {name} <= {up:.17g}")
    for name in extra:
        out.append(f" {name} free")
    out.append("End")
    return "\n".join(out) + "\n"
