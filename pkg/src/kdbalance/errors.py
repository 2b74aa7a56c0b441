"""Exception types shared across the package.

DataError subclasses signal problems with user-supplied input; SolverError
subclasses signal numerical failure while computing weights. The CLI maps the
two families to distinct exit codes.
"""


class KDBalanceError(Exception):
    pass


class DataError(KDBalanceError):
    pass


class SolverError(KDBalanceError):
    pass


# -- dataset validation ------------------------------------------------------

class DimensionMismatch(DataError):
    pass


class NonBinaryTreatment(DataError):
    pass


class EmptyGroup(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class InconsistentOutcomes(DataError):
    """Observed outcome disagrees with the selected potential outcome."""


class MissingPotentialOutcomes(DataError):
    pass


# -- kernel machinery --------------------------------------------------------

class AllPointsIdentical(DataError):
    """Every pairwise distance is zero; no bandwidth can be estimated."""


class DegenerateWitness(SolverError):
    """Kernel distance is numerically zero; the witness direction is undefined."""


# -- quadratic programming ---------------------------------------------------

class RankDeficient(DataError):
    """Equality constraint rows are linearly dependent."""


class SingularQ(SolverError):
    pass


class NumericalBreakdown(SolverError):
    """Linear algebra failed even after ridge escalation."""


# -- balancing ----------------------------------------------------------------

class InfeasibleBalance(SolverError):
    """No nonnegative weights satisfy the balance constraints."""


class SchemeMismatch(DataError):
    """Weights built for one estimand passed to the other's estimator."""


# -- diagnostics --------------------------------------------------------------

class ZeroVariance(DataError):
    pass


class TooFewEstimates(DataError):
    pass


class EmptySample(DataError):
    pass


# -- simulation ---------------------------------------------------------------

class DegenerateAssignment(DataError):
    """A simulated replication drew an empty treated or control group."""


# -- I/O ----------------------------------------------------------------------

class ParseError(DataError):
    """Malformed CSV cell; carries the offending row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class UsageError(KDBalanceError):
    """Bad command-line invocation."""
