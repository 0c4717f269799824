from grrm.solver.backends import BackendResult, BackendStatus, Cone, LinearProgram, solve_lp, solve_socp
from grrm.solver.grrm import (
    BackprojectionReport,
    GrrmSolution,
    SolveStatus,
    UncertaintySpec,
    erm_backprojection,
    feasibility_probe,
    solve,
    solve_rrm,
    uncertainty_membership,
    weighted_discrepancy,
)
from grrm.solver.program import (
    ConvexProgram,
    GrrmProblem,
    VariableLayout,
    assemble_program,
    feature_support,
    to_lp_format,
)

__all__ = [
    "BackendResult",
    "BackendStatus",
    "BackprojectionReport",
    "Cone",
    "ConvexProgram",
    "GrrmProblem",
    "GrrmSolution",
    "LinearProgram",
    "SolveStatus",
    "UncertaintySpec",
    "VariableLayout",
    "assemble_program",
    "erm_backprojection",
    "feasibility_probe",
    "feature_support",
    "solve",
    "solve_lp",
    "solve_rrm",
    "solve_socp",
    "to_lp_format",
    "uncertainty_membership",
    "weighted_discrepancy",
]
