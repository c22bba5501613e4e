import json
import math

import numpy as np
import pytest
from numpy.random import default_rng
from pydantic import ValidationError

from models.estimation_models import Experiment, PosteriorGrid
from models.signal_models import PulseSignal, StepSignal
from services.estimation_service import estimation_service, linear_axis, uniform_prior
from services.system_service import load_model_file
from utils.errors import (
    EstimationError, PosteriorError, UnboundParameterError, UnidentifiableError, WorkbenchError,
)

TIMES = np.round(np.arange(1, 31) * 0.1, 10).tolist()


@pytest.fixture
def scalar_data(scalar_lti, coarse):
    """Noise-free step data of dx/dt = -2x + u, y = 0.5 x"""
    return estimation_service.synthesize_data(
        scalar_lti.system, {"a": 2.0, "b": 1.0, "c": 0.5}, StepSignal(u0=1.0), TIMES, 0.0, 0, coarse
    )


class TestSynthesis:
    def test_noise_free_records_nominal_sigma(self, scalar_data):
        assert scalar_data.sigma_noise == 0.01
        expected = 0.5 * (1.0 - np.exp(-2.0 * np.asarray(TIMES))) / 2.0
        np.testing.assert_allclose(scalar_data.observations, expected, atol=1e-7)

    def test_recorded_sigma_override(self, scalar_lti, coarse):
        e = estimation_service.synthesize_data(
            scalar_lti.system, scalar_lti.default_params, StepSignal(u0=1.0), [1.0], 0.0, 0, coarse, recorded_sigma=0.5
        )
        assert e.sigma_noise == 0.5

    def test_seeded_noise(self, scalar_lti, coarse, scalar_data):
        noisy = estimation_service.synthesize_data(
            scalar_lti.system, {"a": 2.0, "b": 1.0, "c": 0.5}, StepSignal(u0=1.0), TIMES, 0.1, 7, coarse
        )
        assert noisy.sigma_noise == 0.1
        noise = noisy.observation_array() - scalar_data.observation_array()
        np.testing.assert_allclose(noise, default_rng(7).normal(0.0, 0.1, size=len(TIMES)), atol=1e-14)

    def test_negative_noise(self, scalar_lti):
        with pytest.raises(WorkbenchError):
            estimation_service.synthesize_data(
                scalar_lti.system, scalar_lti.default_params, StepSignal(u0=1.0), [1.0], -1.0, 0
            )


class TestLeastSquares:
    def test_recovers_rate_and_gain(self, scalar_lti, scalar_data, coarse):
        result = estimation_service.least_squares_fit(
            scalar_lti.system, [scalar_data], {"a": 1.0, "c": 1.0},
            bounds={"a": (0.1, 10.0)}, fixed={"b": 1.0}, cfg=coarse,
        )
        assert result.converged
        assert result.param_names == ["a", "c"]
        assert result.params["a"] == pytest.approx(2.0, abs=1e-5)
        assert result.params["c"] == pytest.approx(0.5, abs=1e-5)
        assert result.params["b"] == 1.0
        assert result.covariance_matrix().shape == (2, 2)

    def test_flat_direction_has_huge_variance(self, scalar_lti, scalar_data, coarse):
        result = estimation_service.least_squares_fit(
            scalar_lti.system, [scalar_data], {"a": 1.5, "b": 1.0, "c": 1.0}, cfg=coarse,
        )
        b, c = result.params["b"], result.params["c"]
        direction = np.array([0.0, b, -c]) / math.hypot(b, c)
        assert direction @ result.covariance_matrix() @ direction > 1e6
        assert result.params["b"] * result.params["c"] == pytest.approx(0.5, rel=1e-4)

    def test_insensitive_parameter(self, lambda_system, coarse):
        e = estimation_service.synthesize_data(
            lambda_system.system, lambda_system.default_params, StepSignal(u0=1.0), TIMES, 0.0, 0, coarse
        )
        with pytest.raises(UnidentifiableError):
            estimation_service.least_squares_fit(
                lambda_system.system, [e], {"lambda": 0.5}, fixed={"a_tot": 2.0}, cfg=coarse
            )

    def test_unbound_parameters(self, scalar_lti, scalar_data):
        with pytest.raises(UnboundParameterError):
            estimation_service.least_squares_fit(scalar_lti.system, [scalar_data], {"a": 1.0})

    def test_invalid_setups(self, scalar_lti, scalar_data):
        with pytest.raises(EstimationError):
            estimation_service.least_squares_fit(scalar_lti.system, [], {"a": 1.0}, fixed={"b": 1.0, "c": 1.0})
        with pytest.raises(EstimationError):
            estimation_service.least_squares_fit(scalar_lti.system, [scalar_data], {}, fixed={"a": 1.0, "b": 1.0, "c": 1.0})
        with pytest.raises(EstimationError):
            estimation_service.least_squares_fit(
                scalar_lti.system, [scalar_data], {"a": 20.0}, bounds={"a": (0.1, 10.0)}, fixed={"b": 1.0, "c": 0.5}
            )


class TestBayes:
    def test_pulse_concentrates_the_posterior(self, lambda_system, coarse):
        pulse = PulseSignal(u0=1.0, t_off=1.0)
        times = np.round(1.0 + np.arange(1, 11) * 0.1, 10).tolist()
        e = estimation_service.synthesize_data(lambda_system.system, lambda_system.default_params, pulse, times, 0.0, 0, coarse)
        prior = uniform_prior({"lambda": linear_axis(0.5, 2.0, 31)})
        posterior = estimation_service.bayes_update(prior, e, lambda_system.system, fixed={"a_tot": 2.0}, cfg=coarse)
        assert posterior.mode()["lambda"] == pytest.approx(1.0, abs=1e-9)
        assert posterior.probabilities().max() > 0.99
        assert posterior.probabilities().sum() == pytest.approx(1.0)

    def test_step_leaves_the_prior_unchanged(self, lambda_system, coarse):
        e = estimation_service.synthesize_data(
            lambda_system.system, lambda_system.default_params, StepSignal(u0=1.0), TIMES, 0.0, 0, coarse
        )
        prior = uniform_prior({"lambda": linear_axis(0.5, 2.0, 16)})
        posterior = estimation_service.bayes_update(prior, e, lambda_system.system, fixed={"a_tot": 2.0}, cfg=coarse)
        np.testing.assert_allclose(posterior.probabilities(), prior.probabilities(), rtol=1e-9)

    def test_update_order_does_not_matter(self, lambda_system, coarse):
        first = estimation_service.synthesize_data(
            lambda_system.system, lambda_system.default_params, PulseSignal(u0=1.0, t_off=1.0), [1.2, 1.5], 0.0, 0, coarse
        )
        second = estimation_service.synthesize_data(
            lambda_system.system, lambda_system.default_params, PulseSignal(u0=2.0, t_off=0.5), [0.8, 2.0], 0.02, 3, coarse
        )
        prior = uniform_prior({"lambda": linear_axis(0.5, 2.0, 16)})
        orders = []
        for a, b in ((first, second), (second, first)):
            grid = estimation_service.bayes_update(prior, a, lambda_system.system, fixed={"a_tot": 2.0}, cfg=coarse)
            orders.append(estimation_service.bayes_update(grid, b, lambda_system.system, fixed={"a_tot": 2.0}, cfg=coarse))
        np.testing.assert_allclose(orders[0].log_weights, orders[1].log_weights, atol=1e-10)

    def test_posterior_contracts_as_samples_arrive(self, lambda_system, coarse):
        pulse = PulseSignal(u0=1.0, t_off=1.0)
        times = np.round(np.arange(1, 51) * 0.1, 10).tolist()
        data = estimation_service.synthesize_data(
            lambda_system.system, lambda_system.default_params, pulse, times, 0.01, 7, coarse
        )
        grid = uniform_prior({"lambda": linear_axis(0.9, 1.1, 201)})
        spreads = [grid.std("lambda")]
        for start in range(0, 50, 10):
            batch = Experiment(
                signal=pulse,
                sample_times=data.sample_times[start:start + 10],
                observations=data.observations[start:start + 10],
                sigma_noise=0.01,
            )
            grid = estimation_service.bayes_update(grid, batch, lambda_system.system, fixed={"a_tot": 2.0}, cfg=coarse)
            spreads.append(grid.std("lambda"))
        assert all(later <= 1.1 * earlier for earlier, later in zip(spreads, spreads[1:]))
        assert spreads[-1] < 0.2 * spreads[0]
        assert grid.mean("lambda") == pytest.approx(1.0, abs=0.02)

    def test_all_cells_inconsistent(self, coarse):
        system, _ = load_model_file(json.dumps({
            "states": ["x"], "params": ["a"], "rhs": {"x": "a*x"}, "output": "x", "x0": [1.0],
        }))
        e = Experiment(signal=StepSignal(u0=0.0), sample_times=[1.0], observations=[1.0], sigma_noise=0.1)
        with pytest.raises(PosteriorError):
            estimation_service.bayes_update(uniform_prior({"a": linear_axis(100.0, 200.0, 3)}), e, system, cfg=coarse)

    def test_unbound_parameter(self, lambda_system, scalar_data):
        with pytest.raises(UnboundParameterError):
            estimation_service.log_likelihood(uniform_prior({"lambda": [1.0]}), scalar_data, lambda_system.system)


class TestPosteriorGrid:
    @pytest.fixture
    def grid(self):
        p = np.array([[0.1, 0.2, 0.1], [0.3, 0.2, 0.1]])
        return PosteriorGrid(axes={"a": [0.0, 1.0], "b": [10.0, 20.0, 30.0]}, log_weights=np.log(p).ravel().tolist())

    def test_cells_are_c_ordered(self, grid):
        cells = grid.cell_values()
        np.testing.assert_array_equal(cells["a"], [0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        np.testing.assert_array_equal(cells["b"], [10.0, 20.0, 30.0, 10.0, 20.0, 30.0])
        assert grid.shape == (2, 3)

    def test_summaries(self, grid):
        assert grid.mode() == {"a": 1.0, "b": 10.0}
        np.testing.assert_allclose(grid.marginal("a"), [0.4, 0.6])
        np.testing.assert_allclose(grid.marginal("b"), [0.4, 0.4, 0.2])
        assert grid.mean("a") == pytest.approx(0.6)
        assert grid.std("a") == pytest.approx(math.sqrt(0.24))

    def test_validation(self):
        with pytest.raises(ValidationError):
            PosteriorGrid(axes={"a": [0.0, 1.0]}, log_weights=[0.0])
        with pytest.raises(ValidationError):
            PosteriorGrid(axes={}, log_weights=[])
        with pytest.raises(ValidationError):
            PosteriorGrid(axes={"a": [0.0]}, log_weights=[math.inf])

    def test_uniform_prior(self):
        prior = uniform_prior({"a": [1.0, 2.0], "b": [0.0, 1.0]})
        np.testing.assert_allclose(prior.probabilities(), 0.25)

    @pytest.mark.parametrize("lo, hi, cells", [(1.0, 1.0, 5), (2.0, 1.0, 5), (0.0, 1.0, 1)])
    def test_linear_axis_errors(self, lo, hi, cells):
        with pytest.raises(WorkbenchError):
            linear_axis(lo, hi, cells)
