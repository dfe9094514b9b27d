from __future__ import annotations

from typing import Optional


class EntroForestError(Exception):
    """Base class for all errors raised by entroforest.

    `exit_code` is the process exit status the CLI uses for the error.
    """

    exit_code = 1


class ConfigurationError(EntroForestError):
    exit_code = 2


class DomainError(EntroForestError, ValueError):
    exit_code = 2


class NumericError(EntroForestError):
    exit_code = 3


class DataError(EntroForestError):
    exit_code = 3


class EmptySampleError(DataError):
    pass


class InsufficientSampleError(DataError):
    pass


class AbsoluteContinuityError(DataError):
    pass


class ParseError(DataError):
    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ) -> None:
        self.path = path
        self.row = row
        self.column = column
        location = ":".join(
            str(part) for part in (path, row, column) if part is not None
        )
        super().__init__(f"{location}: {message}" if location else message)


class FormatError(DataError):
    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class VersionError(FormatError):
    pass
