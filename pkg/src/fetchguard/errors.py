"""Exception types shared across the package."""


class FetchGuardError(Exception):
    """Base class for all package errors."""


class ParameterError(FetchGuardError, ValueError):
    """A value is outside the range an operation accepts."""


class AlignmentError(FetchGuardError, ValueError):
    """An address is not word-aligned."""


class ModeError(FetchGuardError, RuntimeError):
    """An operation was invoked in the wrong configure/query mode."""


class DataError(FetchGuardError, ValueError):
    """Input data is structurally unusable (e.g. an empty program image)."""


class FormatError(FetchGuardError, ValueError):
    """A file or text payload could not be parsed.

    ``line`` is 1-based for text inputs, ``offset`` is a byte offset for
    binary inputs; whichever does not apply is None.
    """

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(message + where)
        self.line = line
        self.offset = offset


class CollisionError(FetchGuardError, RuntimeError):
    """Program installation hit index collisions under a geometry that forbids them."""

    def __init__(self, count: int):
        super().__init__(f"{count} memory index collision(s) during installation")
        self.count = count
