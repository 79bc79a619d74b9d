"""Exception hierarchy shared by every module of the package."""


class AfpError(Exception):
    """Base class for all errors raised by cyclic_afp."""


class EvaluationFault(AfpError):
    """Arithmetic failure while evaluating an expression at a concrete point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ParameterFault(AfpError, ValueError):
    """A class parameter, rate or tolerance lies outside its admissible range."""


class UnsupportedClassFault(AfpError):
    pass


class UnmatchedPointFault(AfpError):
    """No branch of a piecewise map covers the point."""

    def __init__(self, message, point, index=None):
        super().__init__(message)
        self.point = point
        self.index = index


class OrbitExitFault(AfpError):
    """A Picard iterate left the set it was supposed to land in.

    ``trace`` holds everything computed up to the offending iterate so callers
    can still inspect the displacements.
    """

    def __init__(self, message, point, index, trace=None):
        super().__init__(message)
        self.point = point
        self.index = index
        self.trace = trace


class EmptyGridError(AfpError):
    pass


class GridCapError(AfpError):
    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class EmptyDomainFault(AfpError):
    pass


class EmptySetFault(AfpError):
    pass


class SpecSyntaxError(AfpError):
    """Malformed problem-spec text; carries a 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.reason = message
        self.line = line
        self.column = column


class SpecSemanticError(AfpError):
    """Well-formed text that does not describe a valid problem."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
