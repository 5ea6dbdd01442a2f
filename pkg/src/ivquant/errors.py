"""Exception types."""


class IVQuantError(Exception):
    """Base class for package errors."""


class DomainError(IVQuantError, ValueError):
    pass


class SingularCovariance(IVQuantError, ValueError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (failing pivot index {pivot})")


class EmptySupport(IVQuantError, ValueError):
    pass


class DegenerateCovariate(IVQuantError, ValueError):
    pass


class SchemaError(IVQuantError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(IVQuantError, ValueError):
    pass


class InvariantViolation(IVQuantError, RuntimeError):
    pass


class TruncationOverflow(IVQuantError, RuntimeError):
    pass


class BracketError(IVQuantError, RuntimeError):
    pass


class EmptyChain(IVQuantError, ValueError):
    pass


class SamplerError(IVQuantError, RuntimeError):
    """Wraps an error raised inside a sweep with the iteration index."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
