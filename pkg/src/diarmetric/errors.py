"""Exception hierarchy shared by every module of the toolkit."""


class DiarError(Exception):
    """Base class for toolkit errors."""


class FormatError(DiarError, ValueError):
    """A file does not follow its declared binary or text layout."""


class TruncationError(FormatError):
    """A binary payload is shorter or longer than its header declares."""


class ValidationError(DiarError, ValueError):
    """A value violates a domain invariant (non-finite data, bad geometry, ...)."""


class CapacityError(DiarError, ValueError):
    """Not enough speakers, segments or classes to build the requested sample."""


class NumericError(DiarError, ArithmeticError):
    """A computation produced a non-finite value."""


class EvaluationError(DiarError, ValueError):
    """Scoring is undefined for the given annotations."""
