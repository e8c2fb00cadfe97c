class DomainError(ValueError):
    """Numeric input outside an operation's domain."""


class ConfigurationError(ValueError):
    """Inconsistent vehicle or scenario configuration."""


class EvaluationError(ArithmeticError):
    """A transfer function could not be evaluated (pole on the contour)."""
