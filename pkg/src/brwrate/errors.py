"""Exception types raised across the package."""


class BranchingError(Exception):
    """Base class for all package errors."""


class DomainError(BranchingError, ValueError):
    """Argument lies outside the finiteness domain of the mean measure."""


class PreconditionError(BranchingError, ValueError):
    """A documented precondition of an operation does not hold."""


class DivergentMoment(BranchingError):
    """Monte Carlo tail diagnostics suggest the requested moment is infinite."""


class PopulationOverflow(BranchingError):
    """A generation exceeded the population cap.

    The partially simulated result (up to the last complete generation) is
    attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EnumerationTooLarge(BranchingError):
    """Exhaustive enumeration would visit too many configurations."""


class InsufficientData(BranchingError):
    """Too few usable points for a fit."""


class NonPositiveLitter(BranchingError):
    """A size-biased litter with zero total weight was produced."""


class ConfigError(BranchingError, ValueError):
    """Invalid experiment configuration."""
