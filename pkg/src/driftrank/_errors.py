"""Exception hierarchy shared across modules."""


class DriftrankError(Exception):
    """Base class for all package errors."""


class ValidationError(DriftrankError):
    """Invalid input data or configuration (CLI exit code 1)."""


class CorpusParseError(ValidationError):
    """Malformed corpus or diff input; message names the offending line/field."""
