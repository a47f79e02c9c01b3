"""Exception hierarchy shared across the package.

The CLI maps the three top-level categories onto exit codes.
"""


class PiidError(Exception):
    """Base class for all package errors."""

    category = "Error"


class ConfigError(PiidError):
    category = "ConfigError"


class IoError(PiidError):
    category = "IoError"


class SolveError(PiidError):
    category = "SolveError"


class NotPositiveDefinite(SolveError):
    pass


class NoConvergence(SolveError):
    pass


class DegenerateData(SolveError):
    pass


class ZeroVariance(SolveError):
    pass


class InfeasibleCondition(SolveError):
    pass


class UnboundedBilinearRange(SolveError):
    pass


class AllGridInfeasible(SolveError):
    pass


class NonConvexObjective(ConfigError):
    pass


class KTooLarge(ConfigError):
    pass


class NonPositiveDenominator(SolveError):
    pass


class EmptyGroup(SolveError):
    pass
