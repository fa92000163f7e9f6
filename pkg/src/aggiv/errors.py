"""Exception hierarchy.

The CLI maps these onto its exit codes: configuration problems exit 2,
model/validation problems exit 3 and numerical/estimation problems exit 4.
"""


class AggivError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AggivError, ValueError):
    """A configuration file could not be parsed or lacks required keys."""


class InvalidModelError(AggivError, ValueError):
    """A model violates one of its invariants."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class PreconditionError(InvalidModelError):
    """A model is valid but outside the domain of the requested operation."""


class InvalidAcidError(InvalidModelError):
    """An intervention distribution fails its aggregation constraints."""


class OutOfSupportError(InvalidModelError):
    """An intervention value lies outside the support of an ACID."""


class EstimationError(AggivError):
    """Base class for numerical failures."""


class IrrelevantInstrumentError(EstimationError, ValueError):
    """The instrument has no (population or sample) association with the treatment."""


class RankDeficiencyError(EstimationError, ValueError):
    """A design matrix is rank deficient."""


class UnderidentifiedError(EstimationError, ValueError):
    """Too few instruments for the requested test."""
