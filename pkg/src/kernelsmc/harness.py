"""Experiment harness: config files, missing patterns, Monte Carlo runs.

A config file is a TOML document with ``[model]``, ``[data]``, ``[filter]``,
``[tuner]`` and ``[run]`` sections (all keys are validated; unknown keys are
rejected).  Every Monte Carlo run simulates its own ground truth, applies a
missing-measurement pattern and runs the filter; per-run randomness comes
from ``SeedSequence(seed, spawn_key=(run, stream))`` so each run is
reproducible in isolation and results do not depend on scheduling.

Outputs per invocation: ``run_<k>.csv`` (one row per time step),
``summary.json`` (across-run final-parameter statistics) and
``config.echo.json`` (the resolved configuration).  Outputs are
byte-identical across repeat invocations and worker counts.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .benchmarks import (Example1Config, Example1Model, Example2Config,
                         Example2Model, apply_missing, simulate_truth)
from .errors import ConfigError
from .filtering import FilterConfig, FreezeConfig, run_filter
from .tuning import TuningConfig

_STREAM_DATA = 0
_STREAM_FILTER = 1
_STREAM_PATTERN = 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    model_name: str
    model_overrides: dict = field(default_factory=dict)
    n_steps: int = 100
    missing_percent: float = 0.0
    pattern_seed: int | None = None
    n_particles: int = 1000
    h_init: float = 0.1
    resampler: str = "systematic"
    resample_ess_frac: float = 1.0
    freeze_window: int | None = None
    freeze_tol: float | None = None
    tuner_mode: str = "kl"
    grid_points: int = 21
    refine_iters: int = 20
    h_min: float = 0.0
    h_max: float = 0.3
    common_random_numbers: bool = True
    seed: int = 0
    mc_runs: int = 1
    paper_n_particles: int = 20000
    paper_mc_runs: int = 45

    def __post_init__(self):
        if self.model_name not in ("example1", "example2"):
            raise ConfigError(f"unknown model {self.model_name!r}")
        if self.n_steps < 1:
            raise ConfigError("data.n_steps must be at least 1")
        if not 0.0 <= self.missing_percent <= 100.0:
            raise ConfigError("data.missing_percent must lie in [0, 100]")
        if self.mc_runs < 1:
            raise ConfigError("run.mc_runs must be at least 1")
        self.tuner()  # validates mode/grid/refine
        self.filter_config(np.random.SeedSequence(0))  # validates filter keys
        self.model_config()  # validates model override keys

    def model_config(self):
        base = Example1Config() if self.model_name == "example1" else Example2Config()
        known = {f.name for f in dataclasses.fields(base)}
        bad = set(self.model_overrides) - known
        if bad:
            raise ConfigError(f"unknown model keys: {sorted(bad)}")
        overrides = {k: tuple(v) if isinstance(v, list) else v
                     for k, v in self.model_overrides.items()}
        return replace(base, **overrides)

    def build(self):
        """Returns (model, prior, theta_true, x0_true)."""
        mc = self.model_config()
        model = Example1Model() if self.model_name == "example1" else Example2Model()
        return model, mc.prior(), np.asarray(mc.theta_true, dtype=float), mc.x0_true

    def tuner(self) -> TuningConfig:
        return TuningConfig.from_string(
            self.tuner_mode, grid_points=self.grid_points,
            refine_iters=self.refine_iters, h_min=self.h_min, h_max=self.h_max,
            common_random_numbers=self.common_random_numbers)

    def filter_config(self, seed) -> FilterConfig:
        freeze = None
        if (self.freeze_window is None) != (self.freeze_tol is None):
            raise ConfigError("freeze_window and freeze_tol must be set together")
        if self.freeze_window is not None:
            freeze = FreezeConfig(self.freeze_window, self.freeze_tol)
        return FilterConfig(n_particles=self.n_particles, seed=seed, h_init=self.h_init,
                            tuner=self.tuner(), resampler=self.resampler,
                            resample_ess_frac=self.resample_ess_frac, freeze=freeze)

    def at_paper_scale(self) -> "ExperimentConfig":
        return replace(self, n_particles=self.paper_n_particles, mc_runs=self.paper_mc_runs)


_SECTIONS = {
    "model": {"name", "overrides"},
    "data": {"n_steps", "missing_percent", "pattern_seed"},
    "filter": {"n_particles", "h_init", "resampler", "resample_ess_frac",
               "freeze_window", "freeze_tol"},
    "tuner": {"mode", "grid_points", "refine_iters", "h_min", "h_max",
              "common_random_numbers"},
    "run": {"seed", "mc_runs"},
    "paper_scale": {"n_particles", "mc_runs"},
}


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    for section, keys in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if section == "model":
            continue  # arbitrary override keys allowed, validated against the model
        extra = set(keys) - _SECTIONS[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")

    model = dict(doc.get("model", {}))
    name = model.pop("name", None)
    if name is None:
        raise ConfigError("config must set model.name")
    data = doc.get("data", {})
    filt = doc.get("filter", {})
    tuner = doc.get("tuner", {})
    run = doc.get("run", {})
    paper = doc.get("paper_scale", {})
    try:
        return ExperimentConfig(
            model_name=name,
            model_overrides=model,
            n_steps=int(data.get("n_steps", 100)),
            missing_percent=float(data.get("missing_percent", 0.0)),
            pattern_seed=data.get("pattern_seed"),
            n_particles=int(filt.get("n_particles", 1000)),
            h_init=float(filt.get("h_init", 0.1)),
            resampler=filt.get("resampler", "systematic"),
            resample_ess_frac=float(filt.get("resample_ess_frac", 1.0)),
            freeze_window=filt.get("freeze_window"),
            freeze_tol=filt.get("freeze_tol"),
            tuner_mode=tuner.get("mode", "kl"),
            grid_points=int(tuner.get("grid_points", 21)),
            refine_iters=int(tuner.get("refine_iters", 20)),
            h_min=float(tuner.get("h_min", 0.0)),
            h_max=float(tuner.get("h_max", 0.3)),
            common_random_numbers=bool(tuner.get("common_random_numbers", True)),
            seed=int(run.get("seed", 0)),
            mc_runs=int(run.get("mc_runs", 1)),
            paper_n_particles=int(paper.get("n_particles", 20000)),
            paper_mc_runs=int(paper.get("mc_runs", 45)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in config {path}: {exc}") from exc


def generate_missing_pattern(n_steps: int, percent: float, seed) -> np.ndarray:
    """Time indices (sorted, 1-based) at which measurements are dropped.

    Exactly ``round(n_steps * percent / 100)`` indices are drawn uniformly
    without replacement, except that ``t = 1`` is always kept (the filter
    anchors on at least one measurement), capping the count at
    ``n_steps - 1``.
    """
    if not 0.0 <= percent <= 100.0:
        raise ConfigError("missing percent must lie in [0, 100]")
    count = min(int(np.floor(n_steps * percent / 100.0 + 0.5)), n_steps - 1)
    if count <= 0:
        return np.empty(0, dtype=int)
    rng = np.random.default_rng(seed)
    idx = rng.choice(np.arange(2, n_steps + 1), size=count, replace=False)
    return np.sort(idx)


@dataclass(frozen=True)
class RunResult:
    run: int                    # 1-based
    records: list
    missing_indices: np.ndarray
    theta_final: np.ndarray
    h_final: float


def run_single(cfg: ExperimentConfig, run: int) -> RunResult:
    """Execute one self-contained Monte Carlo run (1-based index)."""
    if run < 1:
        raise ConfigError("run index is 1-based")
    model, prior, theta_true, x0 = cfg.build()
    data_ss = np.random.SeedSequence(cfg.seed, spawn_key=(run, _STREAM_DATA))
    filter_ss = np.random.SeedSequence(cfg.seed, spawn_key=(run, _STREAM_FILTER))
    pattern_entropy = cfg.seed if cfg.pattern_seed is None else cfg.pattern_seed
    pattern_ss = np.random.SeedSequence(pattern_entropy, spawn_key=(run, _STREAM_PATTERN))

    data = simulate_truth(model, theta_true, [x0], cfg.n_steps, data_ss)
    missing = generate_missing_pattern(cfg.n_steps, cfg.missing_percent, pattern_ss)
    dataset = apply_missing(data.measurements, missing)
    records = run_filter(model, prior, dataset, cfg.filter_config(filter_ss))
    final = records[-1]
    return RunResult(run=run, records=records, missing_indices=missing,
                     theta_final=final.theta_mean, h_final=final.h)


def _run_task(args):
    cfg, run = args
    try:
        return run, run_single(cfg, run), None
    except Exception as exc:  # noqa: BLE001 - per-run isolation is the point
        return run, None, f"{type(exc).__name__}: {exc}"


def thread_count() -> int:
    """Worker count from the SMC_THREADS environment variable (default 1)."""
    raw = os.environ.get("SMC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SMC_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("SMC_THREADS must be at least 1")
    return n


def run_mc(cfg: ExperimentConfig, runs: int | None = None, out_dir=None,
           workers: int | None = None) -> dict:
    """Run ``runs`` Monte Carlo repetitions and write outputs.

    Results are ordered by run index regardless of worker scheduling, so
    outputs do not depend on the worker count.  Individual run failures are
    recorded in the summary instead of aborting the sweep.
    """
    runs = cfg.mc_runs if runs is None else runs
    if runs < 1:
        raise ConfigError("need at least one run")
    workers = thread_count() if workers is None else workers
    tasks = [(cfg, r) for r in range(1, runs + 1)]
    results: dict[int, RunResult] = {}
    failures: dict[int, str] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(t) for t in tasks]
    for run, result, err in outcomes:
        if err is None:
            results[run] = result
        else:
            failures[run] = err

    summary = _summarize(cfg, runs, results, failures)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model, *_ = cfg.build()
        for run in sorted(results):
            write_run_csv(out_dir / f"run_{run}.csv", results[run].records, model)
        _write_json(out_dir / "summary.json", summary)
        _write_json(out_dir / "config.echo.json", config_echo(cfg))
    return summary


def _summarize(cfg: ExperimentConfig, requested: int, results: dict, failures: dict) -> dict:
    model, _, theta_true, _ = cfg.build()
    completed = sorted(results)
    finals = np.array([results[r].theta_final for r in completed], dtype=float)
    if finals.size:
        mean = finals.mean(axis=0)
        std = finals.std(axis=0, ddof=1) if len(completed) > 1 else np.zeros(finals.shape[1])
    else:
        mean = std = np.full(model.n_params, np.nan)
    return {
        "schema": "kernelsmc.mc-summary",
        "version": 1,
        "model": cfg.model_name,
        "n_particles": cfg.n_particles,
        "n_steps": cfg.n_steps,
        "missing_percent": cfg.missing_percent,
        "runs_requested": requested,
        "runs_completed": len(completed),
        "failed_runs": [{"run": r, "error": failures[r]} for r in sorted(failures)],
        "single_run": len(completed) == 1,
        "param_names": list(model.param_names),
        "theta_true": [float(v) for v in theta_true],
        "theta_final_mean": [float(v) for v in mean],
        "theta_final_std": [float(v) for v in std],
        "per_run": [{"run": r,
                     "theta_final": [float(v) for v in results[r].theta_final],
                     "h_final": float(results[r].h_final),
                     "n_missing": int(results[r].missing_indices.size)}
                    for r in completed],
    }


def config_echo(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["package_version"] = __version__
    return doc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_run_csv(path, records, model) -> None:
    """One row per time step; floats use shortest round-trip formatting."""
    names = model.param_names
    header = (["t", "kind", "missing"]
              + [f"x_hat_{i}" for i in range(model.n_states)]
              + [f"theta_hat_{n}" for n in names]
              + [f"theta_std_{n}" for n in names]
              + ["h_star", "kl", "ess", "degenerate"])
    lines = [",".join(header)]
    for rec in records:
        row = ([str(rec.t), rec.kind, _fmt(rec.missing)]
               + [_fmt(v) for v in rec.x_mean]
               + [_fmt(v) for v in rec.theta_mean]
               + [_fmt(v) for v in rec.theta_std]
               + [_fmt(rec.h), _fmt(rec.kl), _fmt(rec.ess), _fmt(rec.degenerate)])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_run_csv(path) -> dict:
    """Parse a run CSV back into arrays (None for blank cells)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    cols: dict[str, list] = {name: [] for name in header}
    for row in rows:
        for name, cell in zip(header, row):
            if name == "kind":
                cols[name].append(cell)
            elif cell == "":
                cols[name].append(None)
            elif name == "t":
                cols[name].append(int(cell))
            else:
                cols[name].append(float(cell))
    return cols


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_dataset_csv(path, data, missing_indices) -> None:
    """Ground-truth dump for the ``simulate`` command."""
    missing = set(int(i) for i in missing_indices)
    n = data.states.shape[1]
    p = 0 if data.inputs is None else data.inputs.shape[1]
    m = data.measurements[0].y.size
    header = (["t", "missing"] + [f"u_{i}" for i in range(p)]
              + [f"x_true_{i}" for i in range(n)] + [f"y_{i}" for i in range(m)])
    lines = [",".join(header)]
    for k, meas in enumerate(data.measurements):
        drop = meas.t in missing
        row = [str(meas.t), _fmt(drop)]
        row += [_fmt(v) for v in (data.inputs[k] if p else [])]
        row += [_fmt(v) for v in data.states[k]]
        row += ["" if drop else _fmt(v) for v in meas.y]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
