"""Per-coordinate parameter transforms.

Positivity-constrained parameters (noise variances, scale factors) are
handled by running the random-walk/shrinkage machinery on ``log(theta)``
while the rest of the system sees natural coordinates.  A transform is a
tuple of per-coordinate kinds, currently ``"identity"`` or ``"log"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_KINDS = ("identity", "log")

# Natural values at or below zero would map to -inf internally and poison the
# shrinkage arithmetic (0 * inf = nan); they are floored instead, which keeps
# dead particles finite and lets the likelihood eliminate them.
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ParamTransform:
    """Maps parameter vectors between natural and internal (walk) space."""

    kinds: tuple[str, ...]

    def __post_init__(self):
        for k in self.kinds:
            if k not in _KINDS:
                raise ConfigError(f"unknown transform kind {k!r}")
        object.__setattr__(self, "_log_mask", np.array([k == "log" for k in self.kinds]))

    @classmethod
    def identity(cls, dim: int) -> "ParamTransform":
        return cls(("identity",) * dim)

    @property
    def dim(self) -> int:
        return len(self.kinds)

    @property
    def has_log(self) -> bool:
        return bool(self._log_mask.any())

    def to_internal(self, theta: np.ndarray) -> np.ndarray:
        """Natural -> internal coordinates (log applied to constrained entries)."""
        theta = np.asarray(theta, dtype=float)
        if not self.has_log:
            return theta.copy()
        out = theta.copy()
        m = self._log_mask
        out[..., m] = np.log(np.maximum(theta[..., m], _LOG_FLOOR))
        return out

    def to_natural(self, internal: np.ndarray) -> np.ndarray:
        """Internal -> natural coordinates (exp on constrained entries)."""
        internal = np.asarray(internal, dtype=float)
        if not self.has_log:
            return internal.copy()
        out = internal.copy()
        m = self._log_mask
        with np.errstate(over="ignore"):
            out[..., m] = np.exp(internal[..., m])
        return out

    def prior_internal_moments(self, mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Internal-space Gaussian moments matching the natural-space prior.

        Identity coordinates pass through unchanged.  For a log coordinate
        with natural mean ``m > 0`` and variance ``v``, the matched lognormal
        has ``sigma^2 = log(1 + v / m^2)`` and ``mu = log(m) - sigma^2 / 2``,
        so samples are positive and their natural-space mean/variance
        reproduce ``(m, v)``.  Log coordinates must be uncorrelated with
        every other coordinate in ``cov``.
        """
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if not self.has_log:
            return mean.copy(), cov.copy()
        m = self._log_mask
        off = cov[m][:, ~m]
        cross = cov[m][:, m] - np.diag(np.diag(cov[m][:, m]))
        if np.any(off != 0.0) or np.any(cross != 0.0):
            raise ConfigError("log-transformed coordinates require a diagonal prior block")
        if np.any(mean[m] <= 0.0):
            raise ConfigError("log-transformed coordinates require positive prior means")
        mu = mean.copy()
        sig = cov.copy()
        var = np.diag(cov)[m]
        s2 = np.log1p(var / mean[m] ** 2)
        mu[m] = np.log(mean[m]) - 0.5 * s2
        idx = np.flatnonzero(m)
        sig[idx, idx] = s2
        return mu, sig
