"""Exception types shared across the package."""


class EpiguideError(Exception):
    """Base class for all package errors."""


class DomainError(EpiguideError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class SchemaError(EpiguideError, ValueError):
    """A file or record does not match its expected schema.

    ``field`` names the offending key when one is known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CandidateUnavailable(EpiguideError, LookupError):
    """A depth candidate cannot be used for a block (a control point is invalid)."""
