"""Exception types shared across the library."""


class HashlabError(Exception):
    """Base class for all library errors."""


class ConfigError(HashlabError):
    """Invalid parameters for a family, distribution, or experiment."""


class TableFullError(HashlabError):
    """Insertion attempted into a table with no empty slot."""


class BalanceInfeasibleError(HashlabError):
    """A strategy-mix balance equation has no solution in [0, 1]."""


class BudgetExceededError(HashlabError):
    """An exact-enumeration request is beyond the configured budget."""


class CalibrationError(HashlabError):
    """Calibration failed to converge or a cache is missing/corrupt."""


class PrecisionError(HashlabError):
    """Too many hash-value ties: fixed-point precision is too low."""
