"""Weighted particle clouds over the extended vector ``(x, theta)``.

Weights are kept in log space throughout; normalization happens once per
measurement update via log-sum-exp.  Moment reductions run in a fixed
summation order (plain ``einsum`` over the particle axis) so results are
reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from ._num import sanitize_logliks
from .errors import AllWeightsZero, ContractViolation

_BLOCKS = ("full", "state", "parameter")


@dataclass(frozen=True)
class MomentSummary:
    """First two weighted moments of a particle block."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class PointEstimate:
    """Posterior mean/covariance split into state and parameter blocks."""

    x_mean: np.ndarray
    x_cov: np.ndarray
    theta_mean: np.ndarray
    theta_cov: np.ndarray


@dataclass(frozen=True)
class ParticleCloud:
    """N joint particles with log weights.

    ``normalized`` records whether ``exp(log_w)`` sums to one; operations
    that need proper weights (moments, ESS, resampling) refuse to run on
    unnormalized clouds instead of silently renormalizing.
    """

    x: np.ndarray
    theta: np.ndarray
    log_w: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        x = np.atleast_2d(x)
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        log_w = np.asarray(self.log_w, dtype=float)
        if x.shape[0] != theta.shape[0] or x.shape[0] != log_w.shape[0]:
            raise ContractViolation("x, theta and log_w must agree on particle count")
        if x.shape[0] < 1:
            raise ContractViolation("cloud must contain at least one particle")
        if log_w.ndim != 1:
            raise ContractViolation("log_w must be one-dimensional")
        if np.isnan(log_w).any() or np.any(log_w == np.inf):
            raise ContractViolation("log weights must be in [-inf, finite]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "log_w", log_w)

    @classmethod
    def uniform(cls, x: np.ndarray, theta: np.ndarray) -> "ParticleCloud":
        arr = np.asarray(x, dtype=float)
        n = arr.shape[0] if arr.ndim else 1
        return cls(x, theta, np.full(n, -np.log(n)), normalized=True)

    @property
    def n_particles(self) -> int:
        return self.x.shape[0]

    @property
    def n_states(self) -> int:
        return self.x.shape[1]

    @property
    def n_params(self) -> int:
        return self.theta.shape[1]

    def weights(self) -> np.ndarray:
        self._require_normalized()
        return np.exp(self.log_w)

    def normalize(self) -> "ParticleCloud":
        if self.normalized:
            return self
        lse = logsumexp(self.log_w)
        if not np.isfinite(lse):
            raise AllWeightsZero("cannot normalize: every weight is zero")
        return replace(self, log_w=self.log_w - lse, normalized=True)

    def block(self, which: str) -> np.ndarray:
        if which == "state":
            return self.x
        if which == "parameter":
            return self.theta
        if which == "full":
            return np.hstack([self.x, self.theta])
        raise ContractViolation(f"unknown block {which!r}, expected one of {_BLOCKS}")

    def _require_normalized(self):
        if not self.normalized:
            raise ContractViolation("operation requires normalized weights")


def marginalize(cloud: ParticleCloud, block: str) -> ParticleCloud:
    """Cloud restricted to one block; the other block becomes zero-width."""
    n = cloud.n_particles
    if block == "state":
        return ParticleCloud(cloud.x, np.zeros((n, 0)), cloud.log_w, cloud.normalized)
    if block == "parameter":
        return ParticleCloud(np.zeros((n, 0)), cloud.theta, cloud.log_w, cloud.normalized)
    if block == "full":
        return cloud
    raise ContractViolation(f"unknown block {block!r}, expected one of {_BLOCKS}")


def weighted_moments(cloud: ParticleCloud, block: str = "full") -> MomentSummary:
    """Weighted mean and covariance of a particle block.

    Particles with exactly zero weight are excluded before the reduction so
    non-finite coordinates of dead particles cannot poison the sums.
    """
    cloud._require_normalized()
    values = cloud.block(block)
    w = np.exp(cloud.log_w)
    if np.any(w == 0.0):
        keep = w > 0.0
        values = values[keep]
        w = w[keep]
    mean = np.einsum("i,ij->j", w, values)
    d = values - mean
    cov = np.einsum("i,ij,ik->jk", w, d, d)
    return MomentSummary(mean, 0.5 * (cov + cov.T))


def point_estimate(cloud: ParticleCloud) -> PointEstimate:
    """MMSE state and parameter estimates in natural coordinates."""
    ms = weighted_moments(cloud, "state")
    mp = weighted_moments(cloud, "parameter")
    return PointEstimate(ms.mean, ms.cov, mp.mean, mp.cov)


def reweigh(cloud: ParticleCloud, logliks: np.ndarray) -> tuple[ParticleCloud, float]:
    """Multiply weights by likelihoods and renormalize, in log space.

    Returns the updated cloud and the log normalizing constant
    ``log sum_i w_i * lik_i`` (the incremental marginal likelihood).
    NaN log-likelihoods are treated as -inf; if every particle dies,
    :class:`AllWeightsZero` is raised.
    """
    cloud._require_normalized()
    logliks = sanitize_logliks(logliks)
    if logliks.shape != cloud.log_w.shape:
        raise ContractViolation("logliks must have one entry per particle")
    raw = cloud.log_w + logliks
    log_norm = logsumexp(raw)
    if not np.isfinite(log_norm):
        raise AllWeightsZero("all posterior weights underflowed to zero")
    return replace(cloud, log_w=raw - log_norm, normalized=True), float(log_norm)


def effective_sample_size(cloud: ParticleCloud) -> float:
    """ESS = 1 / sum(W_i^2), computed from log weights."""
    cloud._require_normalized()
    return float(np.exp(-logsumexp(2.0 * cloud.log_w)))


def unique_particle_count(cloud: ParticleCloud, block: str = "parameter") -> int:
    """Number of distinct particle values in a block (support-size diagnostic)."""
    return int(np.unique(cloud.block(block), axis=0).shape[0])
