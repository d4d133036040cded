"""Exception hierarchy shared by all modules."""


class GplmError(Exception):
    """Base class for errors raised by this package."""


class DomainError(GplmError, ValueError):
    """A value lies outside the admissible range for a family."""


class ContractError(GplmError, ValueError):
    """Inputs violate a documented precondition (shapes, configs)."""


class UnderdeterminedWindow(GplmError):
    """Too few observations carry kernel weight at a grid point."""

    def __init__(self, x, count, needed):
        self.x = float(x)
        self.count = int(count)
        self.needed = int(needed)
        super().__init__(
            f"grid point x={self.x:.6g}: {self.count} observations with "
            f"positive kernel weight, need at least {self.needed}"
        )


class DegenerateNull(GplmError):
    """The sample mean of the response sits on the boundary of the mean range."""


class CurveError(GplmError):
    """A curve-level quantity could not be formed from the local fits."""


class DesignError(GplmError, ValueError):
    """The linear design matrix is unusable (rank deficient, intercept column)."""


class NumericalError(GplmError):
    """A statistic came out with an impossible value beyond quadrature noise."""


class SelectionError(GplmError):
    """No bandwidth candidate could be evaluated."""
