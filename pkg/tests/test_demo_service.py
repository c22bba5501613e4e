import pytest

from services.demo_service import DemoService, report_table
from services.system_service import get_registry_model, model_registry
from utils.errors import SingularSystemError

OPERATIONS = {
    "parse_expression", "evaluate_expression", "differentiate_expression",
    "build_linear_system", "get_registry_model",
    "eval_signal", "signal_breakpoints", "signal_laplace",
    "integrate", "closed_form_output",
    "impulse_response", "step_response", "convolve",
    "steady_state_gain", "markov_parameters", "minimality", "io_equivalent", "find_similarity",
    "frequency_response", "deconvolve_impulse", "symmetry_orbit",
    "sensitivity_trajectories", "gram_matrix", "fisher_cramer_rao",
    "fit_derivative", "estimate_a_from_step", "estimate_lambda_from_ramp", "estimate_lambda_from_pulse",
    "propagate_gray_box",
    "synthesize_data", "least_squares_fit", "bayes_update",
}


@pytest.fixture(scope="module")
def report():
    return DemoService(seed=0).run()


def test_every_check_passes(report):
    failed = [(c.name, c.detail) for c in report.checks if not c.passed]
    assert failed == []
    assert report.passed


def test_battery_covers_every_operation(report):
    assert OPERATIONS <= set(report.exercised)


def test_check_names_are_unique(report):
    names = [c.name for c in report.checks]
    assert len(names) == len(set(names))
    assert "step-invisibility" in names


def test_errors_become_failures():
    class Broken(DemoService):
        def battery(self):
            def explode():
                raise SingularSystemError("A is singular")

            return [("broken", "never holds", explode), ("fine", "always holds", lambda: (True, "ok"))]

    result = Broken().run()
    assert [c.passed for c in result.checks] == [False, True]
    assert result.checks[0].detail == "SingularSystemError: A is singular"
    assert not result.passed


def test_report_table(report):
    table = report_table(report)
    assert table.splitlines()[0].split() == ["check", "result", "claim", "detail"]
    assert "FAIL" not in table


def test_sensitivities_cover_every_registry_parameter(report):
    check = next(c for c in report.checks if c.name == "sensitivities")
    cases = 6 * sum(len(get_registry_model(model_id).system.param_names) for model_id in model_registry.ids())
    assert check.passed
    assert check.detail.startswith(f"{cases} model/signal/parameter cases")
