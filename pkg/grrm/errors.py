class GrrmError(ValueError):
    """Base class for every error raised by the grrm library."""


class SpaceError(GrrmError):
    pass


class DistributionError(GrrmError):
    pass


class TransitionError(GrrmError):
    pass


class ObjectiveError(GrrmError):
    pass


class SchemeError(GrrmError):
    pass


class SolverError(GrrmError):
    pass


class InfeasibleError(SolverError):
    pass


class UnboundedError(SolverError):
    pass


class DataError(GrrmError):
    """Malformed input files, schemas or samples."""
