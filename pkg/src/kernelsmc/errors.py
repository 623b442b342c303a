"""Exception taxonomy shared across the package.

Configuration problems (bad config files, invalid option values) raise
:class:`ConfigError`; API misuse (wrong shapes, unnormalized weights where
normalized ones are required) raises :class:`ContractViolation`.  Numeric
degeneracies that the filter can recover from get their own types so the
orchestrator can catch them precisely.
"""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class ContractViolation(ValueError):
    """An API precondition was violated by the caller."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values where finite ones are required.

    ``index`` identifies the offending particle when applicable.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class AllWeightsZero(ArithmeticError):
    """Every posterior weight underflowed to zero after a measurement update."""


class TuningFailed(RuntimeError):
    """Every kernel-width candidate produced a fully degenerate weight set.

    ``fallback_x``/``fallback_theta`` hold the particle arrays propagated at
    the previous kernel width so the caller can recover with uniform weights
    without consuming additional random draws.
    """

    def __init__(self, message: str, fallback_x: np.ndarray | None = None,
                 fallback_theta: np.ndarray | None = None, h: float | None = None):
        super().__init__(message)
        self.fallback_x = fallback_x
        self.fallback_theta = fallback_theta
        self.h = h
