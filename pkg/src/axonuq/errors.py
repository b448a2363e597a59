"""Shared exception types."""


class NumericalError(ArithmeticError):
    """A numerical stage failed (singular system, divergence, bad residual)."""


class ConfigError(ValueError):
    """Invalid configuration input."""
