"""State-space model interfaces and prior/transition primitives.

A model describes one Markov step of the extended vector ``z = (x, theta)``:
states ``x`` evolve through ``propagate``, parameters are carried alongside
and only move through the smoothing/walk machinery in the filter.  Model
methods are vectorized over particles: ``x`` has shape ``(N, n_states)`` and
``theta`` shape ``(N, n_params)`` in natural coordinates.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from ._num import psd_cholesky
from .errors import ConfigError, NumericError
from .transforms import ParamTransform


def _as_matrix(cov, dim: int) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (dim, dim):
        raise ConfigError(f"covariance must be {dim}x{dim}, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
        raise ConfigError("covariance must be symmetric")
    if dim and np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, float(np.trace(cov))):
        raise ConfigError("covariance must be positive semidefinite")
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise with fixed mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", _as_matrix(self.cov, mean.size))

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        l = psd_cholesky(self.cov)
        return self.mean + rng.standard_normal((size, self.dim)) @ l.T


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian prior over the state block and parameter block.

    Parameter moments are given in natural coordinates; constrained
    (log-transformed) coordinates are sampled from the moment-matched
    lognormal so draws are positive and the natural-space sample mean
    converges to ``param_mean``.
    """

    state_mean: np.ndarray
    state_cov: np.ndarray
    param_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    param_cov: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        sm = np.atleast_1d(np.asarray(self.state_mean, dtype=float))
        pm = np.atleast_1d(np.asarray(self.param_mean, dtype=float))
        object.__setattr__(self, "state_mean", sm)
        object.__setattr__(self, "param_mean", pm)
        object.__setattr__(self, "state_cov", _as_matrix(self.state_cov, sm.size))
        object.__setattr__(self, "param_cov", _as_matrix(self.param_cov, pm.size))

    @property
    def n_states(self) -> int:
        return self.state_mean.size

    @property
    def n_params(self) -> int:
        return self.param_mean.size


@dataclass(frozen=True)
class ExtendedState:
    """A single joint particle ``(x, theta)`` in natural coordinates."""

    x: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))


@dataclass(frozen=True)
class Measurement:
    """One dataset row: time index, observation (None when missing), input."""

    t: int
    y: np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        if self.y is not None:
            object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        if self.u is not None:
            object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))

    @property
    def missing(self) -> bool:
        return self.y is None


class SystemModel(abc.ABC):
    """Nonlinear state-space model vectorized over particles.

    Subclasses fix the dimensions, the parameter transform and the three
    mappings below.  ``eps`` arguments are standard-normal draws supplied by
    the caller so that common random numbers can be reused across kernel
    width candidates.
    """

    n_states: int
    n_params: int
    n_obs: int
    input_dim: int = 0
    transform: ParamTransform
    param_names: tuple[str, ...] = ()

    @abc.abstractmethod
    def propagate(self, x: np.ndarray, theta: np.ndarray, u: np.ndarray | None,
                  t: int, eps: np.ndarray) -> np.ndarray:
        """One transition step ``x_{t-1} -> x_t`` for every particle."""

    @abc.abstractmethod
    def loglik(self, x: np.ndarray, theta: np.ndarray, u: np.ndarray | None,
               t: int, y: np.ndarray) -> np.ndarray:
        """Log measurement density ``log p(y | x, theta)`` per particle."""

    @abc.abstractmethod
    def measure(self, x: np.ndarray, theta: np.ndarray, u: np.ndarray | None,
                t: int, eps: np.ndarray) -> np.ndarray:
        """Draw measurements ``y_t`` given states, used by simulators."""

    def measurement_noise_trace(self, theta: np.ndarray) -> np.ndarray | None:
        """Trace of the measurement noise covariance per particle, if defined."""
        return None


def sample_prior_cloud(prior: PriorSpec, transform: ParamTransform, n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` joint particles from the prior.

    States are drawn first, then parameters (internal space, then mapped to
    natural coordinates); the draw order is part of the reproducibility
    contract.
    """
    if n < 1:
        raise ConfigError("need at least one particle")
    lx = psd_cholesky(prior.state_cov)
    x = prior.state_mean + rng.standard_normal((n, prior.n_states)) @ lx.T
    mu, sig = transform.prior_internal_moments(prior.param_mean, prior.param_cov)
    lt = psd_cholesky(sig)
    theta = transform.to_natural(mu + rng.standard_normal((n, prior.n_params)) @ lt.T)
    return x, theta


def sample_prior(prior: PriorSpec, transform: ParamTransform,
                 rng: np.random.Generator) -> ExtendedState:
    """Draw a single joint particle from the prior."""
    x, theta = sample_prior_cloud(prior, transform, 1, rng)
    return ExtendedState(x[0], theta[0])


def transition_sample(model: SystemModel, z: ExtendedState, u: np.ndarray | None,
                      t: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``x_t`` from the transition density for one particle."""
    eps = rng.standard_normal((1, model.n_states))
    x_new = model.propagate(z.x[None, :], z.theta[None, :], u, t, eps)[0]
    if not np.isfinite(x_new).all():
        raise NumericError("propagation produced a non-finite state", index=0)
    return x_new


def parameter_walk_sample(theta: np.ndarray, sigma_theta: np.ndarray,
                          rng: np.random.Generator,
                          transform: ParamTransform | None = None) -> np.ndarray:
    """Add kernel noise ``N(0, sigma_theta)`` to parameter locations.

    The noise is applied in internal coordinates, so log-transformed entries
    stay positive.  ``theta`` may be a single vector or an ``(N, r)`` array.
    """
    theta = np.asarray(theta, dtype=float)
    r = theta.shape[-1]
    if transform is None:
        transform = ParamTransform.identity(r)
    l = psd_cholesky(sigma_theta)
    internal = transform.to_internal(theta)
    eps = rng.standard_normal(internal.shape)
    return transform.to_natural(internal + eps @ l.T)


def measurement_loglik(model: SystemModel, z: ExtendedState, u: np.ndarray | None,
                       y: np.ndarray, t: int = 0) -> float:
    """Log-likelihood of one measurement for one particle.

    Impossible or numerically broken evaluations return ``-inf`` rather
    than raising, so callers can treat them as zero-weight events.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ll = float(model.loglik(z.x[None, :], z.theta[None, :], u, t, y)[0])
    return -np.inf if np.isnan(ll) else ll
