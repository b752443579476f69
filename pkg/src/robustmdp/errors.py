"""Exception types raised by the toolkit."""


class RobustMDPError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RobustMDPError, ValueError):
    """An input object violates a structural invariant."""


class NotIrreducible(RobustMDPError):
    """The policy-induced nominal chain has more than one closed class."""


class AssumptionViolated(RobustMDPError):
    """Irreducibility, aperiodicity or policy positivity does not hold."""


class EmptySet(RobustMDPError, ValueError):
    """A scenario list with no members was supplied."""


class TooLarge(RobustMDPError, ValueError):
    """An exhaustive oracle was asked to handle too many states."""


class DomainError(RobustMDPError, ValueError):
    """A divergence or mirror step was evaluated outside its domain."""


class NonConvergence(RobustMDPError):
    """A fixed-point iteration exceeded its theoretical iteration cap."""


class ModeMismatch(RobustMDPError, ValueError):
    """The contamination operator was requested for a non-contamination set."""


class NoFullSupport(RobustMDPError, ValueError):
    """A state distribution that must have full support has a zero entry."""
