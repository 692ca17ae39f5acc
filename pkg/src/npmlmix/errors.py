"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's preconditions."""


class ModelViolationError(ValueError):
    """A model component produced values outside its admissible range."""


class DegenerateMeasureError(ValueError):
    """An operation would leave a measure with no support."""


class SupportViolationError(ValueError):
    """Observed data falls outside the support of the declared design."""


class NumericDomainError(ValueError):
    """A numeric quantity left the domain where the computation is defined."""
