"""Adaptive SMC for joint state and parameter estimation.

The filter tracks an extended vector (states plus parameters) with a
sequential importance resampling scheme in which parameters evolve through
a moment-preserving shrinkage kernel; the kernel width is retuned at every
measurement by minimizing an empirical KL divergence between predicted and
posterior particle weights.  Missing measurements are handled by
propagating the importance function and holding the last tuned width.
"""

__version__ = "0.1.0"

from .benchmarks import (Example1Config, Example1Model, Example2Config,
                         Example2Model, LinearGaussianModel, SimulatedData,
                         apply_missing, simulate_truth)
from .cloud import (MomentSummary, ParticleCloud, PointEstimate,
                    effective_sample_size, marginalize, point_estimate,
                    reweigh, unique_particle_count, weighted_moments)
from .errors import (AllWeightsZero, ConfigError, ContractViolation,
                     NumericError, TuningFailed)
from .filtering import (EstimateRecord, FilterConfig, FilterState,
                        FreezeConfig, init_filter, load_checkpoint,
                        run_filter, save_checkpoint, step_missing,
                        step_with_measurement)
from .harness import (ExperimentConfig, RunResult, generate_missing_pattern,
                      load_config, run_mc, run_single)
from .kernel import (KernelState, kernel_covariance, shrink_locations,
                     smoothed_mixture_moments)
from .models import (ExtendedState, Measurement, NoiseSpec, PriorSpec,
                     SystemModel, measurement_loglik, parameter_walk_sample,
                     sample_prior, sample_prior_cloud, transition_sample)
from .resampling import (residual_indices, resample, stratified_indices,
                         systematic_indices)
from .transforms import ParamTransform
from .tuning import TuningConfig, TuningResult, kl_hat, omega_ratio, tune_h
