"""Model-layer tests: priors, noise, sampling contracts, single-particle ops."""

import numpy as np
import pytest

from kernelsmc.benchmarks import Example2Model
from kernelsmc.errors import ConfigError, ContractViolation, NumericError
from kernelsmc.models import (
    ExtendedState,
    Measurement,
    NoiseSpec,
    PriorSpec,
    measurement_loglik,
    parameter_walk_sample,
    sample_prior,
    sample_prior_cloud,
    transition_sample,
)
from kernelsmc.transforms import ParamTransform


class TestSpecs:
    def test_noise_spec_sampling_moments(self, rng):
        spec = NoiseSpec(mean=[1.0, -2.0], cov=[[2.0, 0.5], [0.5, 1.0]])
        draws = spec.sample(rng, size=200_000)
        se = np.sqrt(np.diag(spec.cov) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - spec.mean) < 5 * se)
        np.testing.assert_allclose(np.cov(draws, rowvar=False), spec.cov, atol=0.03)

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ConfigError):
            NoiseSpec(mean=[0.0, 0.0], cov=[[1.0, 0.2], [0.3, 1.0]])

    def test_indefinite_covariance_rejected(self):
        with pytest.raises(ConfigError):
            PriorSpec([0.0], [[1.0]], [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_wrong_shape_rejected(self):
        with pytest.raises(ConfigError):
            PriorSpec([0.0, 0.0], [[1.0]])

    def test_prior_spec_dimensions(self):
        p = PriorSpec([0.0, 1.0], np.eye(2), [0.5], [[0.2]])
        assert p.n_states == 2 and p.n_params == 1

    def test_parameter_free_prior(self):
        p = PriorSpec([0.0], [[1.0]])
        assert p.n_params == 0 and p.param_cov.shape == (0, 0)

    def test_measurement_missing_flag(self):
        assert Measurement(t=3).missing
        assert not Measurement(t=3, y=[1.0]).missing

    def test_extended_state_promotes_scalars(self):
        z = ExtendedState(1.0, 2.0)
        assert z.x.shape == (1,) and z.theta.shape == (1,)


class TestPriorSampling:
    def test_shapes_and_reproducibility(self):
        prior = PriorSpec([1.0], [[1.0]], [0.5, 0.2], np.diag([1.0, 0.05]))
        tf = ParamTransform(("identity", "log"))
        a = sample_prior_cloud(prior, tf, 500, np.random.default_rng(3))
        b = sample_prior_cloud(prior, tf, 500, np.random.default_rng(3))
        assert a[0].shape == (500, 1) and a[1].shape == (500, 2)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_draw_order_is_states_then_parameters(self):
        # The contract: states consume the first N normal draws, parameters
        # the next N*r (internal coordinates), independent of the transform.
        prior = PriorSpec([2.0], [[4.0]], [0.5], [[0.25]])
        tf = ParamTransform(("identity",))
        x, theta = sample_prior_cloud(prior, tf, 100, np.random.default_rng(17))
        g = np.random.default_rng(17)
        ex = 2.0 + 2.0 * g.standard_normal((100, 1))
        eth = 0.5 + 0.5 * g.standard_normal((100, 1))
        np.testing.assert_allclose(x, ex, rtol=1e-12)
        np.testing.assert_allclose(theta, eth, rtol=1e-12)

    def test_log_transformed_parameters_are_positive(self):
        prior = PriorSpec([0.0], [[1.0]], [0.2, 0.2], np.diag([0.05, 0.05]))
        tf = ParamTransform(("log", "log"))
        _, theta = sample_prior_cloud(prior, tf, 20_000, np.random.default_rng(8))
        assert np.all(theta > 0.0)
        # Moment-matched draws: natural-space sample moments approach the
        # requested prior moments.
        se = np.sqrt(0.05 / theta.shape[0])
        assert np.all(np.abs(theta.mean(axis=0) - 0.2) < 5 * se)
        assert np.all(np.abs(theta.var(axis=0) - 0.05) < 0.01)

    def test_needs_at_least_one_particle(self):
        prior = PriorSpec([0.0], [[1.0]])
        with pytest.raises(ConfigError):
            sample_prior_cloud(prior, ParamTransform(()), 0, np.random.default_rng(0))

    def test_single_draw_matches_cloud_of_one(self):
        prior = PriorSpec([1.0], [[1.0]], [0.5], [[0.2]])
        tf = ParamTransform(("identity",))
        z = sample_prior(prior, tf, np.random.default_rng(9))
        x, theta = sample_prior_cloud(prior, tf, 1, np.random.default_rng(9))
        np.testing.assert_array_equal(z.x, x[0])
        np.testing.assert_array_equal(z.theta, theta[0])


class TestSingleParticleOps:
    def test_transition_sample_matches_vectorized_model(self):
        model = Example2Model()
        z = ExtendedState([5.0], [2.0, 25.0, 8.0, 0.05, 0.1, 0.1])
        got = transition_sample(model, z, None, 1, np.random.default_rng(4))
        g = np.random.default_rng(4)
        eps = g.standard_normal((1, 1))
        want = model.propagate(z.x[None, :], z.theta[None, :], None, 1, eps)[0]
        np.testing.assert_array_equal(got, want)

    def test_transition_sample_rejects_nonfinite_state(self):
        model = Example2Model()
        z = ExtendedState([5.0], [0.0, 25.0, 8.0, 0.05, 0.1, 0.1])  # x / 0
        with pytest.raises(NumericError):
            transition_sample(model, z, None, 1, np.random.default_rng(4))

    def test_parameter_walk_zero_noise_is_identity(self):
        theta = np.array([[1.0, -2.0], [0.5, 3.0]])
        out = parameter_walk_sample(theta, np.zeros((2, 2)), np.random.default_rng(0))
        np.testing.assert_array_equal(out, theta)

    def test_parameter_walk_respects_log_transform(self):
        tf = ParamTransform(("log",))
        theta = np.full((5000, 1), 0.01)
        out = parameter_walk_sample(theta, np.array([[4.0]]), np.random.default_rng(1), tf)
        assert np.all(out > 0.0)

    def test_parameter_walk_noise_moments(self):
        theta = np.zeros((100_000, 1))
        sigma = np.array([[0.25]])
        out = parameter_walk_sample(theta, sigma, np.random.default_rng(2))
        assert abs(out.mean()) < 5 * np.sqrt(0.25 / out.size)
        assert abs(out.var() - 0.25) < 0.01

    def test_measurement_loglik_scalar_and_nan_mapping(self):
        model = Example2Model()
        z = ExtendedState([2.0], [2.0, 25.0, 8.0, 0.05, 0.1, 0.1])
        ll = measurement_loglik(model, z, None, np.array([0.2]), t=1)
        assert isinstance(ll, float) and np.isfinite(ll)
        assert measurement_loglik(model, z, None, np.array([np.nan]), t=1) == -np.inf
