class AuditError(Exception):
    """Base class for all fairaudit errors."""


class InputError(AuditError, ValueError):
    """Malformed or inconsistent user input. CLI exit code 2."""


class InvariantError(AuditError):
    """An internal consistency check failed. CLI exit code 3."""
