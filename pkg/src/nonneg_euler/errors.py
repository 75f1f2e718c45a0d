"""Exception hierarchy shared by the library and the CLI."""


class SchemeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SchemeError, ValueError):
    """A state or argument lies outside the admissible domain."""


class InfeasibleError(SchemeError, ValueError):
    """The increment mean and step rate violate the nonnegativity window."""


class InfeasibleCorrelationError(InfeasibleError):
    """No nonnegative two-point vector attains the requested correlation."""


class NumericalError(SchemeError, ArithmeticError):
    """Non-finite payoff, failed quadrature or similar numerical breakdown."""


class ConfigError(SchemeError, ValueError):
    """Malformed or incomplete experiment configuration."""
