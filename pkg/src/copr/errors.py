"""Exception types shared across the library.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here carry extra diagnostic payload (condition estimates, partial iterates)
that callers may want to inspect programmatically.
"""

from __future__ import annotations


class CoprError(Exception):
    """Base class for library-specific failures."""


class RankDeficiencyError(CoprError):
    """Normal matrix of a least-squares step is singular or near-singular.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the offending matrix
        (``inf`` when exactly singular).
    """

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class ConvergenceError(CoprError):
    """An iterative solve exhausted its budget without meeting tolerance.

    The best iterate seen so far is attached so callers can still use it.
    """

    def __init__(self, message: str, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


class NumericalFailure(CoprError):
    """Non-finite values or an otherwise unusable numerical state.

    Carries the iteration trace collected up to the failure point.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ContainerFormatError(CoprError):
    """A binary or CSV container could not be parsed.

    Attributes
    ----------
    offset : int
        Byte offset at which parsing failed, -1 when unknown.
    """

    def __init__(self, message: str, offset: int = -1):
        super().__init__(f"{message} (byte offset {offset})" if offset >= 0 else message)
        self.offset = offset
