"""hashlab: adversarial low-independence hash distributions, instrumented
linear probing, minwise bias constructions, and multiply-shift attacks,
with an experiment harness reproducing their growth rates at desk scale.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BalanceInfeasibleError,
    BudgetExceededError,
    CalibrationError,
    ConfigError,
    HashlabError,
    PrecisionError,
    TableFullError,
)
