"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedDesignError(ValueError):
    """Operation not defined for the trial design it was given."""


class DegenerateDataError(ArithmeticError):
    """Zero variance estimate where a t statistic is required."""


class NoSecondStageError(ValueError):
    """Stage 2 too small for a stage-wise statistic."""


class BudgetError(ValueError):
    """Full enumeration requested beyond the enumeration cap."""


class ConfigError(ValueError):
    """Invalid scenario configuration.

    ``field`` names the offending key; ``line`` is set for parse errors.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
