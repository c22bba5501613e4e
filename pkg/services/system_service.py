"""Linear triples, expression-based systems, model files and the model registry."""
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from models.expression_models import Constant, Expression, InputVar, StateVar
from models.system_models import (
    ClosedFormPiece, ClosedFormRecord, GeneralSystem, LinearSystem, ModelFile, ModelRegistryEntry,
)
from services.expression_service import make_add, make_mul, parse_expression
from utils.errors import InputFileError, UnknownModelError, WorkbenchError

logger = logging.getLogger(__name__)

# Signal fields a closed form may reference
SIGNAL_FIELDS = ("u0", "t_on", "t_off", "slope")


def build_linear_system(A, b, c) -> LinearSystem:
    """Validated LinearSystem from nested sequences or numpy arrays"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return LinearSystem(
        A=A.tolist(),
        b=np.asarray(b, dtype=float).ravel().tolist(),
        c=np.asarray(c, dtype=float).ravel().tolist(),
    )


def lti_to_general(sys: LinearSystem) -> GeneralSystem:
    """Expression form of a linear triple with states x1..xn and no parameters"""
    names = [f"x{i + 1}" for i in range(sys.n)]
    A, b, c = sys.A_matrix, sys.b_vector, sys.c_vector

    def linear_form(coefficients: Sequence[float], input_gain: float = 0.0) -> Expression:
        expr: Expression = Constant(value=0.0)
        for coef, name in zip(coefficients, names):
            expr = make_add(expr, make_mul(Constant(value=float(coef)), StateVar(name=name)))
        return make_add(expr, make_mul(Constant(value=float(input_gain)), InputVar()))

    rhs = [linear_form(A[i], b[i]) for i in range(sys.n)]
    return GeneralSystem(state_names=names, param_names=[], rhs=rhs, output=linear_form(c))


def general_system_from_model_file(model_file: ModelFile) -> GeneralSystem:
    states = list(model_file.states)
    params = model_file.param_names()
    if set(model_file.rhs) != set(states):
        raise InputFileError(f"rhs keys {sorted(model_file.rhs)} do not match states {states}")
    try:
        rhs = [parse_expression(model_file.rhs[name], states, params) for name in states]
    except WorkbenchError as e:
        raise InputFileError(f"Invalid right-hand side: {e}") from e
    try:
        output = parse_expression(model_file.output, states, params)
    except WorkbenchError as e:
        raise InputFileError(f"Invalid output expression: {e}") from e
    try:
        return GeneralSystem(state_names=states, param_names=params, rhs=rhs, output=output, x0=model_file.x0)
    except WorkbenchError as e:
        raise InputFileError(str(e)) from e


def load_model_file(source: Union[str, Path]) -> Tuple[GeneralSystem, Dict[str, float]]:
    """Read a JSON model file (path or JSON text) into a system and its default parameters"""
    text = str(source)
    path = Path(text)
    if not text.lstrip().startswith("{"):
        try:
            text = path.read_text()
        except OSError as e:
            raise InputFileError(f"Cannot read model file '{source}': {e}") from e
    try:
        model_file = ModelFile.model_validate_json(text)
    except ValidationError as e:
        raise InputFileError(f"Invalid model file: {e.errors()[0]['msg']}") from e
    logger.info(f"Loaded model file with states {model_file.states} and params {model_file.param_names()}")
    return general_system_from_model_file(model_file), model_file.defaults()


# Registry

def _scalar_lti_forms() -> List[ClosedFormRecord]:
    def x(window: str) -> str:
        return f"b*u0*(1 - exp(-a*{window}))/a"

    return [
        ClosedFormRecord(signal_kind="zero", pieces=[ClosedFormPiece(output="0", states={"x": "0"})]),
        ClosedFormRecord(signal_kind="step", pieces=[
            ClosedFormPiece(output=f"c*{x('t')}", states={"x": x("t")}),
        ]),
        ClosedFormRecord(signal_kind="pulse", pieces=[
            ClosedFormPiece(output="0", states={"x": "0"}),
            ClosedFormPiece(start="t_on", output=f"c*{x('(t - t_on)')}", states={"x": x("(t - t_on)")}),
            ClosedFormPiece(
                start="t_off",
                output=f"c*{x('(t_off - t_on)')}*exp(-a*(t - t_off))",
                states={"x": f"{x('(t_off - t_on)')}*exp(-a*(t - t_off))"},
            ),
        ]),
        ClosedFormRecord(signal_kind="ramp", pieces=[
            ClosedFormPiece(
                output="c*b*slope*(t/a - (1 - exp(-a*t))/a^2)",
                states={"x": "b*slope*(t/a - (1 - exp(-a*t))/a^2)"},
            ),
        ]),
    ]


def _lambda_forms(rate_x: str, rate_z: str) -> List[ClosedFormRecord]:
    """Closed forms of dx/dt = -rate_x x + u^2, dz/dt = -rate_z z + u, y = x + u (a_tot - z)"""
    def rise(rate: str, window: str) -> str:
        return f"(1 - exp(-{rate}*{window}))/{rate}"

    def decay(rate: str) -> str:
        return f"(1 - exp(-{rate}*(t_off - t_on)))*exp(-{rate}*(t - t_off))/{rate}"

    def ramp_x(rate: str) -> str:
        return f"slope^2*(t^2/{rate} - 2*t/{rate}^2 + 2*(1 - exp(-{rate}*t))/{rate}^3)"

    def ramp_z(rate: str) -> str:
        return f"slope*(t/{rate} - (1 - exp(-{rate}*t))/{rate}^2)"

    step_x, step_z = f"u0^2*{rise(rate_x, 't')}", f"u0*{rise(rate_z, 't')}"
    on_x, on_z = f"u0^2*{rise(rate_x, '(t - t_on)')}", f"u0*{rise(rate_z, '(t - t_on)')}"
    off_x, off_z = f"u0^2*{decay(rate_x)}", f"u0*{decay(rate_z)}"
    step_output = "a_tot*u0" if rate_x == rate_z else f"{step_x} + u0*(a_tot - {step_z})"
    return [
        ClosedFormRecord(signal_kind="zero", pieces=[ClosedFormPiece(output="0", states={"x": "0", "z": "0"})]),
        ClosedFormRecord(signal_kind="step", pieces=[
            ClosedFormPiece(output=step_output, states={"x": step_x, "z": step_z}),
        ]),
        ClosedFormRecord(signal_kind="pulse", pieces=[
            ClosedFormPiece(output="0", states={"x": "0", "z": "0"}),
            ClosedFormPiece(start="t_on", output=f"{on_x} + u0*(a_tot - {on_z})", states={"x": on_x, "z": on_z}),
            ClosedFormPiece(start="t_off", output=off_x, states={"x": off_x, "z": off_z}),
        ]),
        ClosedFormRecord(signal_kind="ramp", pieces=[
            ClosedFormPiece(
                output=f"{ramp_x(rate_x)} + slope*t*(a_tot - {ramp_z(rate_z)})",
                states={"x": ramp_x(rate_x), "z": ramp_z(rate_z)},
            ),
        ]),
    ]


_REGISTRY_SOURCES = [
    {
        "id": "scalar-lti",
        "file": ModelFile(
            description="Single species dx/dt = -a x + b u with reporter y = c x",
            states=["x"], params={"a": 1.0, "b": 1.0, "c": 1.0},
            rhs={"x": "-a*x + b*u"}, output="c*x",
        ),
        "closed_forms": _scalar_lti_forms(),
    },
    {
        "id": "lambda-system",
        "file": ModelFile(
            description="Two species sharing the degradation rate lambda; reporter y = x + u (a_tot - z)",
            states=["x", "z"], params={"lambda": 1.0, "a_tot": 2.0},
            rhs={"x": "-lambda*x + u^2", "z": "-lambda*z + u"}, output="x + u*(a_tot - z)",
        ),
        "closed_forms": _lambda_forms("lambda", "lambda"),
    },
    {
        "id": "lambda-system-split",
        "file": ModelFile(
            description="lambda-system with independent rates lambda_x and lambda_z",
            states=["x", "z"], params={"lambda_x": 1.0, "lambda_z": 0.5, "a_tot": 2.0},
            rhs={"x": "-lambda_x*x + u^2", "z": "-lambda_z*z + u"}, output="x + u*(a_tot - z)",
        ),
        "closed_forms": _lambda_forms("lambda_x", "lambda_z"),
    },
    {
        "id": "fast-reporter-linear",
        "file": ModelFile(
            description="scalar-lti with a fast reporter state: eps dy/dt = -y + c x",
            states=["x", "y"], params={"a": 1.0, "b": 1.0, "c": 1.0, "eps": 1e-3},
            rhs={"x": "-a*x + b*u", "y": "(-y + c*x)/eps"}, output="y",
        ),
        "closed_forms": [
            ClosedFormRecord(signal_kind="zero", pieces=[ClosedFormPiece(output="0", states={"x": "0", "y": "0"})]),
            ClosedFormRecord(signal_kind="step", pieces=[ClosedFormPiece(
                output="c*b*u0/a*(1 - (exp(-a*t) - a*eps*exp(-t/eps))/(1 - a*eps))",
                states={
                    "x": "b*u0*(1 - exp(-a*t))/a",
                    "y": "c*b*u0/a*(1 - (exp(-a*t) - a*eps*exp(-t/eps))/(1 - a*eps))",
                },
            )]),
        ],
    },
    {
        "id": "fast-reporter-nonlinear",
        "file": ModelFile(
            description="lambda-system with a fast reporter state: eps dy/dt = -y + x + u (a_tot - z)",
            states=["x", "z", "y"], params={"lambda": 1.0, "a_tot": 2.0, "eps": 1e-3},
            rhs={"x": "-lambda*x + u^2", "z": "-lambda*z + u", "y": "(-y + x + u*(a_tot - z))/eps"},
            output="y",
        ),
        "closed_forms": [
            ClosedFormRecord(signal_kind="zero", pieces=[
                ClosedFormPiece(output="0", states={"x": "0", "z": "0", "y": "0"}),
            ]),
            ClosedFormRecord(signal_kind="step", pieces=[ClosedFormPiece(
                output="a_tot*u0*(1 - exp(-t/eps))",
                states={
                    "x": "u0^2*(1 - exp(-lambda*t))/lambda",
                    "z": "u0*(1 - exp(-lambda*t))/lambda",
                    "y": "a_tot*u0*(1 - exp(-t/eps))",
                },
            )]),
        ],
    },
]


def closed_form_names(system: GeneralSystem) -> List[str]:
    """Names a closed-form expression may reference"""
    return list(system.param_names) + list(SIGNAL_FIELDS)


class ModelRegistry:
    """Read-only registry of the worked example models"""

    def __init__(self):
        self._entries: Dict[str, ModelRegistryEntry] = {}
        for source in _REGISTRY_SOURCES:
            model_file: ModelFile = source["file"]
            system = general_system_from_model_file(model_file)
            entry = ModelRegistryEntry(
                id=source["id"],
                description=model_file.description,
                system=system,
                default_params=model_file.defaults(),
                closed_forms=source["closed_forms"],
                source=model_file,
            )
            self._check_closed_forms(entry)
            if entry.id in self._entries:
                raise ValueError(f"Duplicate registry id '{entry.id}'")
            self._entries[entry.id] = entry

    @staticmethod
    def _check_closed_forms(entry: ModelRegistryEntry) -> None:
        names = closed_form_names(entry.system)
        for record in entry.closed_forms:
            for piece in record.pieces:
                for text in [piece.output] + list(piece.states.values()):
                    parse_expression(text, [], names)

    def ids(self) -> List[str]:
        return list(self._entries)

    def get(self, model_id: str) -> ModelRegistryEntry:
        try:
            entry = self._entries[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None
        return entry.model_copy(deep=True)

    def summary(self) -> List[Dict[str, object]]:
        return [
            {
                "id": e.id,
                "description": e.description,
                "states": e.system.state_names,
                "params": e.default_params,
                "closed_forms": [r.signal_kind for r in e.closed_forms],
            }
            for e in self._entries.values()
        ]


# Global registry instance
model_registry = ModelRegistry()


def get_registry_model(model_id: str) -> ModelRegistryEntry:
    return model_registry.get(model_id)


def model_file_json(entry: ModelRegistryEntry) -> str:
    return json.dumps(entry.source.model_dump(), indent=2)
