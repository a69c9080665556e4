"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid probability object, channel table or configuration value."""


class NotDegraded(ValueError):
    """The eavesdropper channel is not a degraded version of the main channel."""


class StructuralAssumptionViolated(ValueError):
    """A special-case formula was requested for a system that does not satisfy its assumptions."""


class InfeasibleSpec(ValueError):
    """A codebook specification cannot be realized (empty bins, memory cap, ...)."""


class DecodingFailure(RuntimeError):
    """Typicality decoding found no unique candidate."""


class BudgetExceeded(RuntimeError):
    """The feedback link would exceed its rate budget."""


class TooLargeForExact(ValueError):
    """The outcome space is above the exact-enumeration cap."""
