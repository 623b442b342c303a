"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def psd_cholesky(a: np.ndarray, jitter_scale: float = 1e-10, max_tries: int = 6) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Exactly-zero (or empty) matrices factor to zero.  Matrices that fail the
    strict factorization get an escalating diagonal jitter starting at
    ``jitter_scale * trace(a) / dim``, which handles covariance estimates
    that lost positive definiteness to rounding.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    tr = float(np.trace(a))
    if tr <= 0.0:
        return np.zeros_like(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = jitter_scale * tr / d
    eye = np.eye(d)
    for _ in range(max_tries):
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError("covariance not factorizable even with jitter")


def sanitize_logliks(ll: np.ndarray) -> np.ndarray:
    """Replace NaN log-likelihoods with -inf and cap +inf to a finite value.

    NaNs come from particles whose parameters wandered into regions where
    the model arithmetic breaks down; mapping them to -inf removes the
    particle through the weight update instead of aborting the filter.
    """
    ll = np.asarray(ll, dtype=float)
    if np.isfinite(ll).all():
        return ll
    return np.nan_to_num(ll, nan=-np.inf, posinf=1e300, neginf=-np.inf)
