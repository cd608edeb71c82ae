"""Shared exception types."""


class ValidationError(ValueError):
    """A value violates a structural invariant (bad polygon, empty route, ...)."""


class DomainError(ValueError):
    """A numeric argument is outside the domain of an operation (v_c <= 0, ...)."""
