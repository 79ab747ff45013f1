"""Semantic exception hierarchy.

Every contract violation raises a subclass of StacklawError so callers can
distinguish bad inputs (ConfigError and friends) from budget exhaustion and
from internal construction bugs that the counting arguments say cannot happen.
"""


class StacklawError(Exception):
    """Base error for this package."""


class ConfigError(StacklawError, ValueError):
    """A configuration field violates its contract."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ZeroMassWindow(StacklawError, ValueError):
    """Conditioning window has measure zero."""


class NonPositiveScale(StacklawError, ValueError):
    """Scale factor must be strictly positive."""


class NonZeroMeanTarget(StacklawError, ValueError):
    """Target law must have mean zero."""


class UnboundedTarget(StacklawError, ValueError):
    """No admissible tail cutoff found below the search cap."""


class QuantizationInfeasible(StacklawError):
    """No denominator within the cap met the distance budget.

    Carries the best distance achieved so the caller can report it.
    """

    def __init__(self, best_distance, q_max):
        self.best_distance = best_distance
        self.q_max = q_max
        super().__init__(
            f"no denominator q <= {q_max} met the budget "
            f"(best distance {best_distance})"
        )


class RefinementInfeasible(StacklawError):
    """Requested refinement cannot be cut from this castle exactly."""


class RepairInfeasible(StacklawError):
    """Block-sum repair ran out of eligible points (internal bug)."""


class DisjointnessInfeasible(StacklawError):
    """Earlier stages left fewer free points than needed (internal bug)."""


class OverlapDetected(StacklawError):
    """Stage sets expected to be disjoint overlap (internal bug)."""


class BudgetExceeded(StacklawError):
    """A configured size or work cap was hit."""

    def __init__(self, what, limit, needed=None):
        self.what = what
        self.limit = limit
        self.needed = needed
        msg = f"{what} exceeded cap {limit}"
        if needed is not None:
            msg += f" (needed {needed})"
        super().__init__(msg)
