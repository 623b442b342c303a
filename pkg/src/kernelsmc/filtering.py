"""Adaptive filter orchestrator.

One :class:`FilterState` is advanced strictly sequentially, one dataset row
per step.  A measured step tunes the kernel width, reweighs, records the
filtered estimate from the weighted cloud and then resamples; a missing
step propagates through the kernel at the width held from the last
measurement, carries the weights unchanged and records a predicted
estimate.  Estimates are always taken before resampling.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._num import psd_cholesky
from .cloud import (ParticleCloud, effective_sample_size, point_estimate,
                    reweigh, weighted_moments)
from .errors import AllWeightsZero, ConfigError, ContractViolation, TuningFailed
from .kernel import KernelState, shrink_locations
from .models import Measurement, PriorSpec, SystemModel, sample_prior_cloud
from .resampling import SCHEMES, resample
from .tuning import TuningConfig, kl_from_log_weights, tune_h

CHECKPOINT_FORMAT = "kernelsmc.filter-state"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class FreezeConfig:
    """Stop parameter evolution once the estimate has settled.

    The filter freezes when the filtered parameter means from the last
    ``window + 1`` measured steps vary (componentwise relative range) by
    less than ``tol``.
    """

    window: int = 50
    tol: float = 1e-3

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("freeze window must be at least 1")
        if not self.tol > 0.0:
            raise ConfigError("freeze tolerance must be positive")


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int
    seed: int | np.random.SeedSequence | None = None
    h_init: float = 0.1
    tuner: TuningConfig = field(default_factory=TuningConfig)
    resampler: str = "systematic"
    resample_ess_frac: float = 1.0
    freeze: FreezeConfig | None = None

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigError("need at least two particles")
        if not 0.0 <= self.h_init <= 1.0:
            raise ConfigError("h_init must lie in [0, 1]")
        if self.resampler not in SCHEMES:
            raise ConfigError(f"unknown resampler {self.resampler!r}, expected one of {SCHEMES}")
        if not 0.0 < self.resample_ess_frac <= 1.0:
            raise ConfigError("resample_ess_frac must lie in (0, 1]")


@dataclass(frozen=True)
class EstimateRecord:
    """Per-step output row.

    ``kind`` is ``"filtered"`` after a measurement update and
    ``"predicted"`` for missing-measurement steps (the two are always in
    correspondence with ``missing``).  ``kl`` is None on predicted rows and
    on degenerate recoveries.
    """

    t: int
    kind: str
    missing: bool
    x_mean: np.ndarray
    theta_mean: np.ndarray
    theta_std: np.ndarray
    h: float
    kl: float | None
    ess: float
    degenerate: bool = False

    def __post_init__(self):
        if (self.kind == "predicted") != self.missing:
            raise ContractViolation("kind must be 'predicted' exactly on missing steps")


@dataclass
class FilterState:
    """Mutable filter state; steps are strictly sequential (single writer)."""

    model: SystemModel
    cfg: FilterConfig
    cloud: ParticleCloud
    kernel: KernelState
    t: int
    gap_len: int
    rng: np.random.Generator
    frozen_params: np.ndarray | None = None
    recent_theta: deque = field(default_factory=lambda: deque())


def init_filter(model: SystemModel, prior: PriorSpec, cfg: FilterConfig) -> FilterState:
    """Draw the initial cloud and compute the initial kernel quantities."""
    if prior.n_states != model.n_states or prior.n_params != model.n_params:
        raise ContractViolation("prior dimensions must match the model")
    rng = np.random.default_rng(cfg.seed)
    x, theta = sample_prior_cloud(prior, model.transform, cfg.n_particles, rng)
    cloud = ParticleCloud.uniform(x, theta)
    mom = weighted_moments(
        ParticleCloud(x, model.transform.to_internal(theta), cloud.log_w), "parameter")
    kernel = KernelState(cfg.h_init, mom.mean, mom.cov)
    window = cfg.freeze.window + 1 if cfg.freeze else 1
    return FilterState(model, cfg, cloud, kernel, t=1, gap_len=0, rng=rng,
                       recent_theta=deque(maxlen=window))


def _record(t, kind, missing, cloud, h, kl, ess, degenerate=False) -> EstimateRecord:
    est = point_estimate(cloud)
    theta_std = np.sqrt(np.clip(np.diag(est.theta_cov), 0.0, None))
    return EstimateRecord(t=t, kind=kind, missing=missing, x_mean=est.x_mean,
                          theta_mean=est.theta_mean, theta_std=theta_std,
                          h=h, kl=kl, ess=ess, degenerate=degenerate)


def _step_frozen(state: FilterState, y, u) -> tuple[ParticleCloud, float | None, bool]:
    """Measured step with evolution disabled: pure SIR on the states."""
    model = state.model
    eps_x = state.rng.standard_normal(state.cloud.x.shape)
    x_new = model.propagate(state.cloud.x, state.cloud.theta, u, state.t, eps_x)
    prop = ParticleCloud(x_new, state.cloud.theta, state.cloud.log_w)
    ll = model.loglik(x_new, state.cloud.theta, u, state.t, y)
    try:
        post, _ = reweigh(prop, ll)
        return post, kl_from_log_weights(prop.log_w, post.log_w), False
    except AllWeightsZero:
        return ParticleCloud.uniform(x_new, state.cloud.theta), None, True


def step_with_measurement(state: FilterState, y: np.ndarray,
                          u: np.ndarray | None = None) -> EstimateRecord:
    """Advance one step and assimilate ``y``; returns the filtered estimate."""
    cfg = state.cfg
    t = state.t
    h_new = state.kernel.h
    if state.frozen_params is not None:
        post, kl, degenerate = _step_frozen(state, y, u)
    else:
        try:
            result = tune_h(state.model, state.cloud, state.kernel, y, u, t,
                            cfg.tuner, state.rng)
            post, h_new, kl, degenerate = result.cloud, result.h_star, result.kl, False
        except TuningFailed as exc:
            post = ParticleCloud.uniform(exc.fallback_x, exc.fallback_theta)
            kl, degenerate = None, True

    ess = effective_sample_size(post)
    record = _record(t, "filtered", False, post, h_new, kl, ess, degenerate)

    if state.model.n_params and state.frozen_params is None:
        mom = weighted_moments(
            ParticleCloud(post.x, state.model.transform.to_internal(post.theta),
                          post.log_w), "parameter")
        state.kernel = KernelState(h_new, mom.mean, mom.cov)

    if ess <= cfg.resample_ess_frac * post.n_particles:
        state.cloud = resample(post, cfg.resampler, state.rng)
    else:
        state.cloud = post
    state.t = t + 1
    state.gap_len = 0
    _maybe_freeze(state, record.theta_mean)
    return record


def step_missing(state: FilterState, u: np.ndarray | None = None) -> EstimateRecord:
    """Advance one step without a measurement; returns the predicted estimate.

    Parameters are shrunk/jittered at the width held from the last measured
    step, weights are carried unchanged and no resampling happens.
    """
    model, cfg = state.model, state.cfg
    t = state.t
    cloud = state.cloud
    kernel = state.kernel
    r = model.n_params

    if state.frozen_params is not None or r == 0:
        theta_new = cloud.theta
        theta_for_dyn = cloud.theta
    else:
        th_int = model.transform.to_internal(cloud.theta)
        shrunk = shrink_locations(th_int, kernel.theta_hat, kernel.h)
        eps_th = state.rng.standard_normal(th_int.shape)
        new_int = shrunk + kernel.h * (eps_th @ psd_cholesky(kernel.v_theta).T)
        theta_for_dyn = model.transform.to_natural(shrunk)
        theta_new = model.transform.to_natural(new_int)
    eps_x = state.rng.standard_normal(cloud.x.shape)
    x_new = model.propagate(cloud.x, theta_for_dyn, u, t, eps_x)

    state.cloud = ParticleCloud(x_new, theta_new, cloud.log_w)
    ess = effective_sample_size(state.cloud)
    record = _record(t, "predicted", True, state.cloud, kernel.h, None, ess)

    if r and state.frozen_params is None:
        # Keep the shrinkage center aligned with the cloud it will act on next.
        mom = weighted_moments(
            ParticleCloud(x_new, new_int, cloud.log_w), "parameter")
        state.kernel = KernelState(kernel.h, mom.mean, kernel.v_theta)
    state.t = t + 1
    state.gap_len += 1
    return record


def _maybe_freeze(state: FilterState, theta_mean: np.ndarray) -> None:
    cfg = state.cfg.freeze
    if cfg is None or state.frozen_params is not None or not state.model.n_params:
        return
    state.recent_theta.append(np.asarray(theta_mean, dtype=float))
    if len(state.recent_theta) < cfg.window + 1:
        return
    window = np.stack(state.recent_theta)
    spread = window.max(axis=0) - window.min(axis=0)
    scale = np.maximum(np.abs(window[-1]), 1e-12)
    if float((spread / scale).max()) < cfg.tol:
        frozen = window[-1].copy()
        state.frozen_params = frozen
        state.cloud = ParticleCloud(
            state.cloud.x, np.tile(frozen, (state.cloud.n_particles, 1)),
            state.cloud.log_w, state.cloud.normalized)


def run_filter(model: SystemModel, prior: PriorSpec, dataset: list[Measurement],
               cfg: FilterConfig) -> list[EstimateRecord]:
    """Run the filter over a dataset with explicit missing rows.

    Dataset rows must be contiguous in time starting at ``t = 1``; a gap in
    the index sequence would be an undeclared missing step.
    """
    state = init_filter(model, prior, cfg)
    records = []
    for k, meas in enumerate(dataset):
        if meas.t != k + 1:
            raise ContractViolation(
                f"dataset rows must run t = 1, 2, ... without gaps (row {k} has t = {meas.t})")
        if meas.missing:
            records.append(step_missing(state, meas.u))
        else:
            records.append(step_with_measurement(state, meas.y, meas.u))
    return records


def save_checkpoint(state: FilterState, path) -> None:
    """Serialize the numeric filter state to a versioned JSON document.

    The model and config are not serialized; :func:`load_checkpoint` takes
    them as arguments.  Floats round-trip exactly (shortest-repr encoding,
    with IEEE infinities allowed for dead-particle log weights).
    """
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "t": state.t,
        "gap_len": state.gap_len,
        "cloud": {
            "x": state.cloud.x.tolist(),
            "theta": state.cloud.theta.tolist(),
            "log_w": state.cloud.log_w.tolist(),
            "normalized": state.cloud.normalized,
        },
        "kernel": {
            "h": state.kernel.h,
            "theta_hat": state.kernel.theta_hat.tolist(),
            "v_theta": state.kernel.v_theta.tolist(),
        },
        "rng_state": state.rng.bit_generator.state,
        "frozen_params": None if state.frozen_params is None else state.frozen_params.tolist(),
        "recent_theta": [v.tolist() for v in state.recent_theta],
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_checkpoint(path, model: SystemModel, cfg: FilterConfig) -> FilterState:
    """Rebuild a :class:`FilterState` saved by :func:`save_checkpoint`."""
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"not a filter checkpoint: {path}")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {blob.get('version')!r}")
    c = blob["cloud"]
    cloud = ParticleCloud(np.array(c["x"], dtype=float),
                          np.array(c["theta"], dtype=float),
                          np.array(c["log_w"], dtype=float),
                          normalized=c["normalized"])
    k = blob["kernel"]
    kernel = KernelState(k["h"], np.array(k["theta_hat"], dtype=float),
                         np.array(k["v_theta"], dtype=float))
    rng = np.random.default_rng()
    rng.bit_generator.state = blob["rng_state"]
    frozen = blob["frozen_params"]
    window = cfg.freeze.window + 1 if cfg.freeze else 1
    recent = deque((np.array(v, dtype=float) for v in blob["recent_theta"]), maxlen=window)
    return FilterState(model, cfg, cloud, kernel, t=blob["t"], gap_len=blob["gap_len"],
                       rng=rng,
                       frozen_params=None if frozen is None else np.array(frozen, dtype=float),
                       recent_theta=recent)
