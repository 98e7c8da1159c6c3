"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`PrivRobustError`.  The three intermediate classes map onto the
CLI exit codes (validation 2, infeasible 3, complexity guard 4).
"""


class PrivRobustError(Exception):
    """Base class for all library errors."""


class ValidationError(PrivRobustError, ValueError):
    """Malformed or inconsistent input."""


class NegativeMass(ValidationError):
    pass


class MassNotOne(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class AlphabetMismatch(ValidationError):
    pass


class EmptySampleSet(ValidationError):
    pass


class InvalidBeta(ValidationError):
    pass


class InvalidParam(ValidationError):
    pass


class InvalidMargin(ValidationError):
    pass


class MissingMargin(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class EmptySet(ValidationError):
    pass


class ReservedLabelCollision(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class Unsupported(ValidationError):
    """The requested measure has no certificate (e.g. Shannon MI)."""


class NotCertifiable(ValidationError):
    """A margin-dependent constant degenerates (margin floor is zero)."""


class ParseError(ValidationError):
    def __init__(self, message, *, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class Infeasible(PrivRobustError):
    """No mechanism satisfies the privacy budget."""


class InfeasibleConstraint(Infeasible):
    pass


class InfeasibleShrunkBudget(Infeasible):
    pass


class EmptyFeasibleSet(Infeasible):
    pass


class TooLarge(PrivRobustError):
    """A brute-force search exceeds the complexity guard."""


class OptimizerNotConverged(PrivRobustError):
    pass
