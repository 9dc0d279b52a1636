"""Exception hierarchy shared by all orbit_shift modules."""


class OrbitShiftError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(OrbitShiftError, ValueError):
    pass


class DomainError(OrbitShiftError, ValueError):
    pass


class ExprSyntaxError(OrbitShiftError, ValueError):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class EvaluationError(OrbitShiftError, ArithmeticError):
    """Raised when an expression is evaluated outside its domain.

    ``subexpression`` holds the printed form of the offending node.
    """

    def __init__(self, message, subexpression=None):
        super().__init__(message)
        self.subexpression = subexpression


class FlowError(OrbitShiftError):
    """A flow could not be evaluated (local-flow window exceeded).

    ``stage`` is filled in by the shift engine when the failure happens
    inside a multi-stage shift.
    """

    stage = None


class TrajectoryEscapeError(FlowError):
    pass


class TimeBoundError(FlowError):
    pass


class ReconstructionError(OrbitShiftError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class LeafPreservationError(OrbitShiftError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
