"""Package exception types."""


class DomainError(ValueError):
    """An input is outside the physical domain of an operation."""


class DivergenceError(RuntimeError):
    """A simulated state left its validity region."""
