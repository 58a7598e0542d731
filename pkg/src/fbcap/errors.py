"""Exception hierarchy shared by all solvers."""


class FbcapError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FbcapError, ValueError):
    """Shapes, memory orders or probability tables are inconsistent."""


class DomainError(FbcapError, ValueError):
    """Argument outside the domain of a function (e.g. a probability > 1)."""


class AbsoluteContinuityError(FbcapError):
    """An output kernel assigns zero mass where the joint law has positive mass."""


class ConvergenceError(FbcapError):
    """An iterative routine stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, context=None):
        super().__init__(message)
        self.residual = residual
        self.context = context or {}


class RegimeError(FbcapError):
    """Closed-form expressions are not valid for these parameters.

    The recursions assume strictly interior optimal input distributions;
    fall back to :func:`fbcap.dp.solve_ftfi` when this is raised.
    """


class BracketError(FbcapError):
    """A multiplier bracket does not straddle the requested average cost."""

    def __init__(self, message, cost_lo=None, cost_hi=None):
        super().__init__(message)
        self.cost_lo = cost_lo
        self.cost_hi = cost_hi


class BudgetError(FbcapError):
    """A brute-force oracle would exceed its enumeration budget."""


class ConsistencyError(FbcapError):
    """Two independent evaluations of the same quantity disagree."""


class SchemaError(ConfigurationError):
    """A channel-spec document does not match the expected layout."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
