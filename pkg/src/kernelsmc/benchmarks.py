"""Benchmark systems and a ground-truth simulator.

Two scalar nonlinear systems exercise the full state+parameter machinery:

* :class:`Example1Model` — controlled linear dynamics with a cosine
  measurement, five unknown parameters ``(alpha, beta, gamma, Q, R)`` and
  i.i.d. standard-normal inputs.
* :class:`Example2Model` — autonomous bimodal benchmark with a quadratic
  measurement and six unknown parameters ``(alpha, beta, kappa, gamma, Q,
  R)``; the signal-to-noise regime is set through the ``(Q, R)`` pair.

Noise variances are log-transformed for the walk/shrinkage machinery; the
remaining parameters move in natural coordinates.  A known-parameter
linear-Gaussian model is included as a closed-form reference system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation
from .models import Measurement, PriorSpec, SystemModel
from .transforms import ParamTransform


def _gaussian_loglik(residual: np.ndarray, var: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ll = -0.5 * (np.log(2.0 * np.pi * var) + residual * residual / var)
    return np.where(var > 0.0, ll, -np.inf)


@dataclass(frozen=True)
class Example1Config:
    """True system and prior for the controlled cosine-measurement benchmark."""

    theta_true: tuple = (0.9, 1.0, 1.0, 0.1, 0.1)
    x0_true: float = 1.0
    prior_mean: tuple = (0.5, 0.5, 0.5, 0.2, 0.2)
    prior_var: tuple = (1.0, 1.0, 1.0, 0.05, 0.05)
    state_prior_mean: float = 1.0
    state_prior_var: float = 1.0

    def prior(self) -> PriorSpec:
        return PriorSpec([self.state_prior_mean], [[self.state_prior_var]],
                         np.asarray(self.prior_mean), np.diag(self.prior_var))


class Example1Model(SystemModel):
    """x' = alpha x + beta u + v,  y = gamma cos(x) + w."""

    n_states = 1
    n_obs = 1
    n_params = 5
    input_dim = 1
    param_names = ("alpha", "beta", "gamma", "q", "r")
    transform = ParamTransform(("identity", "identity", "identity", "log", "log"))

    def propagate(self, x, theta, u, t, eps):
        if u is None:
            raise ContractViolation("this model is controlled; u must be provided")
        with np.errstate(invalid="ignore", over="ignore"):
            return theta[:, 0:1] * x + theta[:, 1:2] * u[0] + np.sqrt(theta[:, 3:4]) * eps

    def loglik(self, x, theta, u, t, y):
        res = y[0] - theta[:, 2] * np.cos(x[:, 0])
        return _gaussian_loglik(res, theta[:, 4])

    def measure(self, x, theta, u, t, eps):
        with np.errstate(invalid="ignore", over="ignore"):
            return theta[:, 2:3] * np.cos(x) + np.sqrt(theta[:, 4:5]) * eps

    def measurement_noise_trace(self, theta):
        return theta[:, 4]


@dataclass(frozen=True)
class Example2Config:
    """True system and prior for the autonomous quadratic-measurement benchmark.

    ``q_true``/``r_true`` select the spread ratio between the transition
    and measurement densities: (0.1, 0.1) is the balanced case, (0.1, 1.0)
    a peaked transition, (1.0, 0.1) a peaked likelihood.
    """

    alpha: float = 2.0
    beta: float = 25.0
    kappa: float = 8.0
    gamma: float = 0.05
    q_true: float = 0.1
    r_true: float = 0.1
    x0_true: float = 5.0
    prior_mean: tuple = (1.0, 20.0, 10.0, 1.0, 0.5, 0.5)
    prior_var: tuple = (1.0, 15.0, 5.0, 1.0, 1.0, 1.0)
    state_prior_mean: float = 5.0
    state_prior_var: float = 1.0

    @property
    def theta_true(self) -> tuple:
        return (self.alpha, self.beta, self.kappa, self.gamma, self.q_true, self.r_true)

    def prior(self) -> PriorSpec:
        return PriorSpec([self.state_prior_mean], [[self.state_prior_var]],
                         np.asarray(self.prior_mean), np.diag(self.prior_var))


class Example2Model(SystemModel):
    """x' = x/alpha + beta x/(1+x^2) + kappa cos(1.2 t) + v,  y = gamma x^2 + w.

    The forcing term uses the destination index: the step producing ``x_t``
    adds ``kappa * cos(1.2 t)``.
    """

    n_states = 1
    n_obs = 1
    n_params = 6
    input_dim = 0
    param_names = ("alpha", "beta", "kappa", "gamma", "q", "r")
    transform = ParamTransform(("identity", "identity", "identity", "identity", "log", "log"))

    def propagate(self, x, theta, u, t, eps):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            drift = (x / theta[:, 0:1]
                     + theta[:, 1:2] * x / (1.0 + x * x)
                     + theta[:, 2:3] * np.cos(1.2 * t))
            return drift + np.sqrt(theta[:, 4:5]) * eps

    def loglik(self, x, theta, u, t, y):
        with np.errstate(invalid="ignore", over="ignore"):
            res = y[0] - theta[:, 3] * x[:, 0] * x[:, 0]
        return _gaussian_loglik(res, theta[:, 5])

    def measure(self, x, theta, u, t, eps):
        with np.errstate(invalid="ignore", over="ignore"):
            return theta[:, 3:4] * x * x + np.sqrt(theta[:, 5:6]) * eps

    def measurement_noise_trace(self, theta):
        return theta[:, 5]


@dataclass(frozen=True)
class LinearGaussianModel(SystemModel):
    """x' = a x + v,  y = c x + w with known coefficients (no parameter block).

    Has a closed-form filtering solution, so it doubles as a correctness
    reference for the particle machinery.
    """

    a: float = 0.9
    c: float = 1.0
    q: float = 0.3
    r: float = 1.0

    n_states = 1
    n_obs = 1
    n_params = 0
    input_dim = 0
    param_names = ()
    transform = ParamTransform(())

    def __post_init__(self):
        if self.q <= 0.0 or self.r <= 0.0:
            raise ConfigError("noise variances must be positive")

    def propagate(self, x, theta, u, t, eps):
        return self.a * x + np.sqrt(self.q) * eps

    def loglik(self, x, theta, u, t, y):
        return _gaussian_loglik(y[0] - self.c * x[:, 0], np.full(x.shape[0], self.r))

    def measure(self, x, theta, u, t, eps):
        return self.c * x + np.sqrt(self.r) * eps

    def measurement_noise_trace(self, theta):
        return np.full(theta.shape[0], self.r)


@dataclass(frozen=True)
class SimulatedData:
    """Ground truth produced by :func:`simulate_truth`."""

    states: np.ndarray                      # (T, n) true states x_1..x_T
    inputs: np.ndarray | None               # (T, p) or None for autonomous models
    measurements: list = field(default_factory=list)  # T Measurement rows


def simulate_truth(model: SystemModel, theta_star: np.ndarray, x0: np.ndarray,
                   n_steps: int, seed) -> SimulatedData:
    """Simulate one trajectory at the true parameters.

    Controlled models receive i.i.d. standard-normal inputs.  Per step the
    draw order is input, process noise, measurement noise, so trajectories
    are reproducible from the seed alone.
    """
    if n_steps < 1:
        raise ConfigError("need at least one step")
    rng = np.random.default_rng(seed)
    theta = np.atleast_1d(np.asarray(theta_star, dtype=float))[None, :]
    if theta.shape[1] != model.n_params:
        raise ContractViolation("theta_star length must match the model")
    x = np.atleast_1d(np.asarray(x0, dtype=float))[None, :]
    states = np.empty((n_steps, model.n_states))
    inputs = np.empty((n_steps, model.input_dim)) if model.input_dim else None
    rows = []
    for t in range(1, n_steps + 1):
        u = rng.standard_normal(model.input_dim) if model.input_dim else None
        x = model.propagate(x, theta, u, t, rng.standard_normal((1, model.n_states)))
        y = model.measure(x, theta, u, t, rng.standard_normal((1, model.n_obs)))
        states[t - 1] = x[0]
        if inputs is not None:
            inputs[t - 1] = u
        rows.append(Measurement(t=t, y=y[0], u=u))
    return SimulatedData(states=states, inputs=inputs, measurements=rows)


def apply_missing(measurements: list, missing_indices) -> list:
    """Blank out ``y`` at the given time indices, keeping inputs intact."""
    missing = set(int(i) for i in missing_indices)
    out = []
    for m in measurements:
        if m.t in missing:
            out.append(Measurement(t=m.t, y=None, u=m.u))
        else:
            out.append(m)
    return out
