import math
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.expression_models import ExprNode
from utils.errors import DimensionError, NonFiniteError


class LinearSystem(BaseModel):
    """LTI triple dx/dt = A x + b u, y = c x"""
    model_config = ConfigDict(frozen=True)

    A: List[List[float]] = Field(..., description="n x n interaction/degradation rates (1/time)")
    b: List[float] = Field(..., description="Input column")
    c: List[float] = Field(..., description="Output row (reporter gain)")

    @model_validator(mode="after")
    def _validate_shapes(self):
        n = len(self.A)
        if n < 1:
            raise DimensionError("A must be at least 1 x 1")
        if any(len(row) != n for row in self.A):
            raise DimensionError(f"A must be square, got rows of lengths {[len(r) for r in self.A]}")
        if len(self.b) != n or len(self.c) != n:
            raise DimensionError(f"b and c must have length {n}, got {len(self.b)} and {len(self.c)}")
        entries = [v for row in self.A for v in row] + list(self.b) + list(self.c)
        if not all(math.isfinite(v) for v in entries):
            raise NonFiniteError("LinearSystem entries must be finite")
        return self

    @classmethod
    def scalar(cls, a: float, b: float, c: float) -> "LinearSystem":
        """Scalar system dx/dt = -a x + b u, y = c x"""
        return cls(A=[[-a]], b=[b], c=[c])

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def A_matrix(self) -> np.ndarray:
        return np.asarray(self.A, dtype=float)

    @property
    def b_vector(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    @property
    def c_vector(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)


class GeneralSystem(BaseModel):
    """Parameterized ODE i/o system: dx/dt = rhs(x, theta, u, t), y = output(x, theta, u, t)"""
    model_config = ConfigDict(frozen=True)

    state_names: List[str] = Field(..., min_length=1)
    param_names: List[str] = Field(default_factory=list)
    rhs: List[ExprNode]
    output: ExprNode
    x0: Optional[List[float]] = Field(None, description="Initial state; all-zero when omitted")

    @model_validator(mode="after")
    def _validate(self):
        from services.expression_service import referenced_names

        if len(self.rhs) != len(self.state_names):
            raise DimensionError(f"{len(self.state_names)} states but {len(self.rhs)} right-hand sides")
        if len(set(self.state_names)) != len(self.state_names) or len(set(self.param_names)) != len(self.param_names):
            raise DimensionError("state and parameter names must be unique")
        declared_states, declared_params = set(self.state_names), set(self.param_names)
        for e in list(self.rhs) + [self.output]:
            names = referenced_names(e)
            undeclared = (names["states"] - declared_states) | (names["params"] - declared_params)
            if undeclared:
                raise DimensionError(f"Undeclared names in expression: {sorted(undeclared)}")
        if self.x0 is not None:
            if len(self.x0) != len(self.state_names):
                raise DimensionError(f"x0 must have length {len(self.state_names)}")
            if not all(math.isfinite(v) for v in self.x0):
                raise NonFiniteError("x0 must be finite")
        return self

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def initial_state(self) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(self.n_states)
        return np.asarray(self.x0, dtype=float)


class ClosedFormPiece(BaseModel):
    """Analytic solution valid from ``start`` until the next piece starts.

    ``start`` is a number or the name of a signal field (``t_on``, ``t_off``);
    expressions may use model parameters, signal fields and ``t``.
    """
    model_config = ConfigDict(frozen=True)

    start: str = "0"
    output: str
    states: Dict[str, str] = Field(default_factory=dict)


class ClosedFormRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    signal_kind: Literal["zero", "step", "pulse", "ramp"]
    pieces: List[ClosedFormPiece] = Field(..., min_length=1)


class ModelFile(BaseModel):
    """JSON model document; maps one-to-one onto GeneralSystem"""
    states: List[str] = Field(..., min_length=1)
    params: Union[Dict[str, Optional[float]], List[str]] = Field(default_factory=dict)
    rhs: Dict[str, str]
    output: str
    x0: Optional[List[float]] = None
    description: str = ""

    def param_names(self) -> List[str]:
        return list(self.params)

    def defaults(self) -> Dict[str, float]:
        if isinstance(self.params, list):
            return {}
        return {k: v for k, v in self.params.items() if v is not None}


class ModelRegistryEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    description: str = ""
    system: GeneralSystem
    default_params: Dict[str, float]
    closed_forms: List[ClosedFormRecord] = Field(default_factory=list)
    source: Optional[ModelFile] = Field(None, description="Source document of the system")

    def closed_form(self, signal_kind: str) -> Optional[ClosedFormRecord]:
        for record in self.closed_forms:
            if record.signal_kind == signal_kind:
                return record
        return None
