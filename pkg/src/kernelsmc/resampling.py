"""Resampling schemes returning equally weighted clouds.

The index selectors are pure functions of the weights and the uniform
draws, which makes them easy to test exhaustively; :func:`resample` wires
them to a Generator.  All schemes are unbiased: the expected copy count of
particle ``i`` is ``N * W_i``.
"""

from __future__ import annotations

import numpy as np

from .cloud import ParticleCloud
from .errors import ConfigError, ContractViolation

SCHEMES = ("systematic", "stratified", "residual")


def _cumulative(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ContractViolation("weights must be a non-empty vector")
    if np.any(w < 0.0) or not np.isfinite(w).all():
        raise ContractViolation("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0.0:
        raise ContractViolation("weights must not all be zero")
    c = np.cumsum(w) / total
    c[-1] = 1.0
    return c


def systematic_indices(weights: np.ndarray, u0: float) -> np.ndarray:
    """One shared uniform offset, N evenly spaced positions."""
    c = _cumulative(weights)
    n = c.size
    positions = (u0 + np.arange(n)) / n
    return np.searchsorted(c, positions, side="left")


def stratified_indices(weights: np.ndarray, us: np.ndarray) -> np.ndarray:
    """One independent uniform per stratum ``[k/N, (k+1)/N)``."""
    c = _cumulative(weights)
    us = np.asarray(us, dtype=float)
    n = c.size
    if us.shape != (n,):
        raise ContractViolation("need one uniform per particle")
    positions = (np.arange(n) + us) / n
    return np.searchsorted(c, positions, side="left")


def residual_indices(weights: np.ndarray, us: np.ndarray) -> np.ndarray:
    """Deterministic floor(N*W) copies, stratified draw on the remainder.

    Output ordering is fixed: the deterministic copies come first in
    particle order, then the stratified remainder draws.
    """
    w = np.asarray(weights, dtype=float)
    _cumulative(w)  # shape/positivity checks
    w = w / w.sum()
    n = w.size
    counts = np.floor(n * w).astype(int)
    base = np.repeat(np.arange(n), counts)
    n_rem = n - counts.sum()
    if n_rem == 0:
        return base
    rem = np.maximum(n * w - counts, 0.0)
    rem_c = np.cumsum(rem) / rem.sum()
    rem_c[-1] = 1.0
    us = np.asarray(us, dtype=float)[:n_rem]
    positions = (np.arange(n_rem) + us) / n_rem
    tail = np.searchsorted(rem_c, positions, side="left")
    return np.concatenate([base, tail])


def resample(cloud: ParticleCloud, scheme: str, rng: np.random.Generator) -> ParticleCloud:
    """Draw an equally weighted cloud from a normalized weighted one."""
    cloud._require_normalized()
    w = cloud.weights()
    n = cloud.n_particles
    if scheme == "systematic":
        idx = systematic_indices(w, rng.uniform())
    elif scheme == "stratified":
        idx = stratified_indices(w, rng.uniform(size=n))
    elif scheme == "residual":
        idx = residual_indices(w, rng.uniform(size=n))
    else:
        raise ConfigError(f"unknown resampling scheme {scheme!r}, expected one of {SCHEMES}")
    return ParticleCloud.uniform(cloud.x[idx], cloud.theta[idx])
