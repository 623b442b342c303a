"""Shrinkage kernel for parameter evolution.

Plain parameter jittering (theta' = theta + noise) inflates the posterior
spread by the kernel covariance each step.  Shrinking locations toward the
weighted mean before jittering,

    theta_shrunk = a * theta + (1 - a) * theta_hat,    a = sqrt(1 - h^2),

with kernel covariance ``h^2 * V`` exactly restores the first two weighted
moments of the cloud, so the kernel width ``h`` trades particle diversity
against artificial diffusion without biasing the moments.  Everything here
operates in internal (transformed) parameter coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import MomentSummary
from .errors import ContractViolation


@dataclass
class KernelState:
    """Kernel quantities carried between filter steps.

    ``theta_hat`` and ``v_theta`` are the weighted mean/covariance of the
    parameter marginal in internal coordinates from the most recent
    measurement update; ``h`` is the kernel width in effect.
    """

    h: float
    theta_hat: np.ndarray
    v_theta: np.ndarray

    def __post_init__(self):
        self.theta_hat = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        self.v_theta = np.asarray(self.v_theta, dtype=float)
        if self.v_theta.shape != (self.theta_hat.size, self.theta_hat.size):
            raise ContractViolation("v_theta must be square and match theta_hat")
        _check_h(self.h)

    def sigma_theta(self) -> np.ndarray:
        return kernel_covariance(self.v_theta, self.h)


def _check_h(h: float):
    if not 0.0 <= h <= 1.0:
        raise ContractViolation(f"kernel width must lie in [0, 1], got {h}")


def shrink_locations(theta: np.ndarray, theta_hat: np.ndarray, h: float) -> np.ndarray:
    """Contract particle locations toward the weighted mean.

    ``h = 0`` returns the locations unchanged; ``h = 1`` collapses them all
    onto ``theta_hat``.
    """
    _check_h(h)
    a = np.sqrt(1.0 - h * h)
    return a * np.asarray(theta, dtype=float) + (1.0 - a) * np.asarray(theta_hat, dtype=float)


def kernel_covariance(v_theta: np.ndarray, h: float) -> np.ndarray:
    """Kernel covariance ``h^2 * V`` paired with the shrinkage above."""
    _check_h(h)
    return h * h * np.asarray(v_theta, dtype=float)


def smoothed_mixture_moments(weights: np.ndarray, locations: np.ndarray,
                             sigma: np.ndarray) -> MomentSummary:
    """Mean and covariance of the Gaussian mixture ``sum_i w_i N(loc_i, sigma)``.

    With shrunk locations and ``sigma = h^2 V`` this reproduces the raw
    weighted moments of the original cloud exactly.
    """
    w = np.asarray(weights, dtype=float)
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if w.ndim != 1 or w.shape[0] != locations.shape[0]:
        raise ContractViolation("weights must be one-dimensional, one per location")
    if abs(w.sum() - 1.0) > 1e-8 or np.any(w < 0.0):
        raise ContractViolation("weights must be normalized and nonnegative")
    mean = np.einsum("i,ij->j", w, locations)
    d = locations - mean
    cov = np.einsum("i,ij,ik->jk", w, d, d) + np.asarray(sigma, dtype=float)
    return MomentSummary(mean, 0.5 * (cov + cov.T))
