import json
import math

import numpy as np
import pytest

from models.signal_models import (
    ImpulseApproxSignal, PiecewiseLinearSignal, PulseSignal, RampSignal, StepSignal, ZeroSignal,
)
from models.simulation_models import SolverConfig
from services.simulation_service import build_time_grid, grid_indices, simulation_service
from services.system_service import load_model_file
from utils.errors import DivergenceError, NoClosedFormError, UnboundParameterError, WorkbenchError


def model(rhs: str, x0=None, params=None):
    document = {"states": ["x"], "params": params or [], "rhs": {"x": rhs}, "output": "x"}
    if x0 is not None:
        document["x0"] = x0
    return load_model_file(json.dumps(document))[0]


class TestTimeGrid:
    def test_uniform(self):
        np.testing.assert_allclose(build_time_grid((0.0, 1.0), 0.25), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_breakpoints_and_extra_times_are_nodes(self):
        grid = build_time_grid((0.0, 1.0), 0.25, breakpoints=[0.3, 2.0], extra_times=[0.6])
        assert 0.3 in grid and 0.6 in grid
        assert grid[-1] == 1.0
        assert np.all(np.diff(grid) > 0)

    def test_near_duplicate_nodes_are_merged(self):
        grid = build_time_grid((0.0, 1.0), 0.25, breakpoints=[0.5 + 1e-12])
        assert len(grid) == 5

    @pytest.mark.parametrize("span, h", [((1.0, 0.0), 0.1), ((0.0, 1.0), 0.0), ((0.0, 1.0), 2.0)])
    def test_invalid(self, span, h):
        with pytest.raises(WorkbenchError):
            build_time_grid(span, h)

    def test_grid_indices(self):
        grid = np.array([0.0, 0.1, 0.3, 1.0])
        np.testing.assert_array_equal(grid_indices(grid, [0.3, 0.0]), [2, 0])
        with pytest.raises(WorkbenchError):
            grid_indices(grid, [0.5])


class TestIntegration:
    def test_step_matches_closed_form(self, scalar_lti, coarse):
        sig = StepSignal(u0=1.0)
        traj = simulation_service.integrate(scalar_lti.system, scalar_lti.default_params, sig, (0.0, 5.0), coarse)
        expected = [simulation_service.closed_form_output("scalar-lti", {}, sig, t) for t in traj.times]
        np.testing.assert_allclose(traj.outputs, expected, atol=1e-8)

    def test_pulse_matches_closed_form(self, lambda_system, coarse):
        sig = PulseSignal(u0=1.0, t_on=0.5, t_off=1.5)
        traj = simulation_service.integrate(lambda_system.system, lambda_system.default_params, sig, (0.0, 4.0), coarse)
        assert 0.5 in traj.times and 1.5 in traj.times
        for t, y in zip(traj.times, traj.outputs):
            assert y == pytest.approx(simulation_service.closed_form_output("lambda-system", {}, sig, t), abs=1e-8)

    def test_pulse_opening_before_zero_acts_from_zero(self, scalar_lti, coarse):
        runs = [
            simulation_service.integrate(scalar_lti.system, scalar_lti.default_params, sig, (0.0, 2.0), coarse)
            for sig in (PulseSignal(u0=1.0, t_on=-0.5, t_off=1.0), PulseSignal(u0=1.0, t_off=1.0))
        ]
        assert runs[0].times == runs[1].times
        assert runs[0].outputs == runs[1].outputs

    def test_zero_input_stays_at_rest(self, scalar_lti, coarse):
        traj = simulation_service.integrate(scalar_lti.system, scalar_lti.default_params, ZeroSignal(), (0.0, 1.0), coarse)
        assert not np.any(traj.output_array())

    def test_nonzero_initial_state(self, coarse):
        traj = simulation_service.integrate(model("-x", x0=[1.0]), {}, ZeroSignal(), (0.0, 1.0), coarse)
        assert traj.outputs[-1] == pytest.approx(math.exp(-1.0), abs=1e-9)

    def test_unbound_parameter(self, scalar_lti):
        with pytest.raises(UnboundParameterError) as info:
            simulation_service.integrate(scalar_lti.system, {"a": 1.0}, StepSignal(u0=1.0), (0.0, 1.0))
        assert info.value.names == ["b", "c"]

    def test_divergence(self, coarse):
        with pytest.raises(DivergenceError):
            simulation_service.integrate(model("x^2", x0=[1.0]), {}, ZeroSignal(), (0.0, 2.0), coarse)

    def test_rk4_is_fourth_order(self, scalar_lti):
        sig = StepSignal(u0=1.0)
        exact = 1.0 - math.exp(-1.0)
        errors = []
        for h in (0.1, 0.05):
            traj = simulation_service.integrate(
                scalar_lti.system, scalar_lti.default_params, sig, (0.0, 1.0), SolverConfig(h=h)
            )
            errors.append(abs(traj.outputs[-1] - exact))
        assert 12.0 < errors[0] / errors[1] < 20.0

    def test_sample_output(self, scalar_lti):
        y = simulation_service.sample_output(scalar_lti.system, scalar_lti.default_params, StepSignal(u0=1.0), 1.0, 0.1)
        assert len(y.values) == 11
        assert y.h == 0.1
        assert y.values[-1] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-5)


class TestBatch:
    def test_matches_single_runs(self, lambda_system, coarse):
        sig = StepSignal(u0=1.0)
        times = [0.5, 1.0, 2.0]
        outputs = simulation_service.integrate_batch(
            lambda_system.system, {"lambda": np.array([0.5, 1.0]), "a_tot": 2.0}, sig, times, coarse
        )
        assert outputs.shape == (2, 3)
        for row, rate in zip(outputs, (0.5, 1.0)):
            traj = simulation_service.integrate(
                lambda_system.system, {"lambda": rate, "a_tot": 2.0}, sig, (0.0, 2.0), coarse, extra_times=times
            )
            expected = [traj.outputs[i] for i in grid_indices(traj.time_array(), times)]
            np.testing.assert_allclose(row, expected, rtol=1e-10)

    def test_divergent_cells_are_masked(self, coarse):
        outputs = simulation_service.integrate_batch(
            model("a*x", x0=[1.0], params=["a"]), {"a": np.array([1.0, 200.0])}, ZeroSignal(), [1.0], coarse
        )
        assert outputs[0, 0] == pytest.approx(math.e, rel=1e-6)
        assert np.isnan(outputs[1, 0])

    def test_no_sample_times(self, lambda_system, coarse):
        outputs = simulation_service.integrate_batch(
            lambda_system.system, {"lambda": np.array([0.5, 1.0, 2.0]), "a_tot": 2.0}, StepSignal(u0=1.0), [], coarse
        )
        assert outputs.shape == (3, 0)

    def test_mismatched_lengths(self, lambda_system):
        with pytest.raises(WorkbenchError):
            simulation_service.integrate_batch(
                lambda_system.system, {"lambda": np.ones(2), "a_tot": np.ones(3)}, StepSignal(u0=1.0), [1.0]
            )


class TestClosedForms:
    def test_at_rest_before_zero(self):
        assert simulation_service.closed_form_output("scalar-lti", {}, StepSignal(u0=1.0), -1.0) == 0.0

    def test_limit_at_infinity(self):
        assert simulation_service.closed_form_output("scalar-lti", {}, StepSignal(u0=2.0), math.inf) == 2.0

    def test_lambda_step_output_is_constant(self):
        for t in (0.0, 0.7, 3.0):
            y = simulation_service.closed_form_output("lambda-system", {"a_tot": 3.0}, StepSignal(u0=1.0), t)
            assert y == pytest.approx(3.0)

    def test_pulse_opening_before_zero(self):
        early, unit = PulseSignal(u0=1.0, t_on=-0.5, t_off=1.0), PulseSignal(u0=1.0, t_off=1.0)
        for t in (0.3, 2.0):
            assert simulation_service.closed_form_output("scalar-lti", {}, early, t) == \
                simulation_service.closed_form_output("scalar-lti", {}, unit, t)
        gone = PulseSignal(u0=1.0, t_on=-2.0, t_off=-1.0)
        assert simulation_service.closed_form_output("scalar-lti", {}, gone, 1.0) == 0.0

    def test_state_quantity(self):
        z = simulation_service.closed_form_output("lambda-system", {}, StepSignal(u0=1.0), 1.0, quantity="z")
        assert z == pytest.approx(1.0 - math.exp(-1.0))
        with pytest.raises(WorkbenchError):
            simulation_service.closed_form_output("lambda-system", {}, StepSignal(u0=1.0), 1.0, quantity="q")

    def test_impulse_is_a_narrow_pulse(self):
        impulse = simulation_service.closed_form_output("scalar-lti", {}, ImpulseApproxSignal(width=0.1), 0.5)
        pulse = simulation_service.closed_form_output("scalar-lti", {}, PulseSignal(u0=10.0, t_off=0.1), 0.5)
        assert impulse == pulse

    def test_ramp_derivatives_at_zero(self):
        sig = RampSignal(slope=1.0)
        params = {"lambda": 1.5, "a_tot": 2.0}
        first = simulation_service.closed_form_output("lambda-system", params, sig, 0.0, derivative=1)
        fourth = simulation_service.closed_form_output("lambda-system", params, sig, 0.0, derivative=4)
        assert first == pytest.approx(2.0, rel=1e-9)
        assert fourth == pytest.approx(3.0, rel=1e-9)

    def test_missing_forms(self):
        with pytest.raises(NoClosedFormError):
            simulation_service.closed_form_output("scalar-lti", {}, PiecewiseLinearSignal(knots=((0.0, 1.0),)), 1.0)
        with pytest.raises(NoClosedFormError):
            simulation_service.closed_form_output("fast-reporter-linear", {}, PulseSignal(u0=1.0, t_off=1.0), 1.0)
