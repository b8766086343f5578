"""Exception types shared across the package."""


class UsageError(ValueError):
    """A caller violated an operation's contract (bad arguments or config)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (singular matrix, failed factorization)."""
