class ValidationError(ValueError):
    """Input data violates a documented schema or invariant."""


class SchemaError(ValidationError):
    """A CSV header does not match its documented schema."""


class EmptyHistoryError(ValidationError):
    """A runner has no race history before the cutoff date."""
