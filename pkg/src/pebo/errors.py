"""Exception types raised across the toolkit."""


class PeboError(Exception):
    """Base class for all toolkit errors."""


class NonFinite(PeboError, FloatingPointError):
    """A state or integrand became NaN/Inf during integration."""


class BadEigenvalue(PeboError, ValueError):
    """An observer eigenvalue is not strictly stable (or not real)."""


class NonInjective(PeboError):
    """Two or more distinct minimizers reach the cost floor of the left inverse."""

    def __init__(self, message, minimizers=None):
        super().__init__(message)
        self.minimizers = minimizers


class NoSolution(PeboError):
    """No minimizer of the left-inverse cost reaches the acceptance floor."""

    def __init__(self, message, best=None, cost=None):
        super().__init__(message)
        self.best = best
        self.cost = cost


class Singular(PeboError, ArithmeticError):
    """A closed-form inverse hit a singular matrix or a vanishing denominator."""


class ConfigError(PeboError, ValueError):
    """Malformed or inconsistent scenario/model configuration."""


class RankDeficientPsi(PeboError):
    """The transform Jacobian lost column rank over part of a window."""

    def __init__(self, message, times=None):
        super().__init__(message)
        self.times = times


class IllConditioned(PeboError, RuntimeWarning):
    """Finite-difference noise swamps a numerically differentiated quantity."""
