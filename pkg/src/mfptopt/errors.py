class MfptOptError(Exception):
    """Base class for package errors."""


class GraphError(MfptOptError):
    """Malformed graph input or invalid weight vector."""


class ReducibleChainError(MfptOptError):
    """The chain is not irreducible, so pi, D and M are undefined."""


class InfeasibleError(MfptOptError):
    """A constraint set is empty or inconsistent."""


class ConfigError(MfptOptError):
    """Optimizer configuration violates its assumptions."""
