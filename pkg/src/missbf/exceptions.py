"""Exception hierarchy.

Validation-type failures map to CLI exit code 2, numerical failures to 3.
"""


class MissbfError(Exception):
    exit_code = 1


class ValidationError(MissbfError):
    """Input data or configuration rejected before any numerics run."""

    exit_code = 2


class ParseError(ValidationError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DomainError(MissbfError):
    """A numerical precondition failed (singular matrix, degenerate fit...)."""

    exit_code = 3


class SamplerAssertionError(DomainError):
    pass
