import json

import numpy as np
import pytest

from models.system_models import GeneralSystem, LinearSystem, ModelFile
from services.expression_service import evaluate_expression, parse_expression
from services.system_service import (
    build_linear_system, general_system_from_model_file, get_registry_model, load_model_file, lti_to_general,
    model_file_json, model_registry,
)
from utils.errors import DimensionError, InputFileError, NonFiniteError, UnknownModelError

MODEL_JSON = json.dumps({
    "states": ["x"],
    "params": {"k": 0.5, "g": None},
    "rhs": {"x": "-k*x + g*u"},
    "output": "x",
})


class TestLinearSystems:
    def test_build_from_nested_lists(self):
        sys = build_linear_system([[-1.0, 0.0], [1.0, -2.0]], [1.0, 0.0], [0.0, 1.0])
        assert sys.n == 2
        np.testing.assert_array_equal(sys.A_matrix, [[-1.0, 0.0], [1.0, -2.0]])

    def test_scalar_convention(self):
        assert LinearSystem.scalar(2.0, 1.0, 3.0) == build_linear_system([[-2.0]], [1.0], [3.0])

    @pytest.mark.parametrize("A, b, c", [
        ([[1.0, 2.0]], [1.0], [1.0]),
        ([[-1.0]], [1.0, 2.0], [1.0]),
        ([[-1.0, 0.0], [0.0, -1.0]], [1.0, 1.0], [1.0]),
    ])
    def test_dimension_errors(self, A, b, c):
        with pytest.raises(DimensionError):
            build_linear_system(A, b, c)

    def test_non_finite_entries(self):
        with pytest.raises(NonFiniteError):
            build_linear_system([[np.nan]], [1.0], [1.0])

    def test_lti_to_general_keeps_the_dynamics(self):
        sys = build_linear_system([[-1.0, 2.0], [0.5, -3.0]], [1.0, -1.0], [2.0, 1.0])
        general = lti_to_general(sys)
        assert general.state_names == ["x1", "x2"]
        x = np.array([0.3, -0.7])
        env = {"x1": x[0], "x2": x[1], "u": 2.0, "t": 0.0}
        rhs = [evaluate_expression(e, env) for e in general.rhs]
        np.testing.assert_allclose(rhs, sys.A_matrix @ x + sys.b_vector * 2.0)
        assert evaluate_expression(general.output, env) == pytest.approx(sys.c_vector @ x)


class TestGeneralSystems:
    def test_undeclared_names_are_rejected(self):
        with pytest.raises(DimensionError):
            GeneralSystem(
                state_names=["x"], param_names=[],
                rhs=[parse_expression("-k*x", ["x"], ["k"])], output=parse_expression("x", ["x"]),
            )

    def test_rhs_count_matches_states(self):
        with pytest.raises(DimensionError):
            GeneralSystem(state_names=["x", "z"], rhs=[parse_expression("-x", ["x", "z"])],
                          output=parse_expression("x", ["x", "z"]))

    def test_initial_state_defaults_to_zero(self, scalar_lti):
        np.testing.assert_array_equal(scalar_lti.system.initial_state(), [0.0])


class TestModelFiles:
    def test_load_from_text(self):
        system, defaults = load_model_file(MODEL_JSON)
        assert system.state_names == ["x"]
        assert system.param_names == ["k", "g"]
        assert defaults == {"k": 0.5}

    def test_load_from_path(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(MODEL_JSON)
        system, _ = load_model_file(path)
        assert system.param_names == ["k", "g"]

    def test_params_may_be_a_plain_list(self):
        system, defaults = load_model_file(json.dumps({
            "states": ["x"], "params": ["k"], "rhs": {"x": "-k*x"}, "output": "x", "x0": [1.0],
        }))
        assert defaults == {}
        np.testing.assert_array_equal(system.initial_state(), [1.0])

    @pytest.mark.parametrize("document", [
        "{not json",
        json.dumps({"states": ["x"], "rhs": {"x": "-q*x"}, "output": "x"}),
        json.dumps({"states": ["x"], "rhs": {"z": "-x"}, "output": "x"}),
        json.dumps({"states": ["x"], "rhs": {"x": "-x +"}, "output": "x"}),
        json.dumps({"states": ["x"], "rhs": {"x": "-x"}, "output": "x", "x0": [1.0, 2.0]}),
        json.dumps({"rhs": {"x": "-x"}, "output": "x"}),
    ])
    def test_invalid_documents(self, document):
        with pytest.raises(InputFileError):
            load_model_file(document)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFileError):
            load_model_file(tmp_path / "absent.json")

    def test_model_file_maps_to_system(self):
        model_file = ModelFile.model_validate_json(MODEL_JSON)
        assert general_system_from_model_file(model_file) == load_model_file(MODEL_JSON)[0]


class TestRegistry:
    def test_ids(self):
        assert model_registry.ids() == [
            "scalar-lti", "lambda-system", "lambda-system-split", "fast-reporter-linear", "fast-reporter-nonlinear",
        ]

    def test_unknown_id(self):
        with pytest.raises(UnknownModelError):
            get_registry_model("no-such-model")

    def test_entries_are_copies(self):
        entry = get_registry_model("scalar-lti")
        entry.default_params["a"] = 99.0
        assert get_registry_model("scalar-lti").default_params["a"] == 1.0

    def test_lambda_system_shape(self, lambda_system):
        assert lambda_system.system.state_names == ["x", "z"]
        assert lambda_system.default_params == {"lambda": 1.0, "a_tot": 2.0}
        assert lambda_system.closed_form("ramp") is not None
        assert lambda_system.closed_form("pwl") is None

    def test_summary(self):
        summary = {row["id"]: row for row in model_registry.summary()}
        assert summary["fast-reporter-linear"]["closed_forms"] == ["zero", "step"]
        assert summary["scalar-lti"]["states"] == ["x"]

    @pytest.mark.parametrize("model_id", ["scalar-lti", "lambda-system", "fast-reporter-nonlinear"])
    def test_model_file_json_round_trip(self, model_id):
        entry = get_registry_model(model_id)
        system, defaults = load_model_file(model_file_json(entry))
        assert system == entry.system
        assert defaults == entry.default_params
