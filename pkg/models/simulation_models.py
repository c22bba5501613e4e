import math
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import get_settings


class SolverConfig(BaseModel):
    """Fixed-step integrator settings"""
    model_config = ConfigDict(frozen=True)

    h: float = Field(default_factory=lambda: get_settings().solver_step, gt=0, description="Nominal step size")
    method: Literal["rk4"] = Field("rk4", description="Classical 4th-order Runge-Kutta")


class Trajectory(BaseModel):
    """Sampled solution of a GeneralSystem under one input"""
    model_config = ConfigDict(frozen=True)

    state_names: List[str]
    times: List[float] = Field(..., description="Strictly increasing time grid")
    inputs: List[float] = Field(..., description="u(t) at each grid time (right value)")
    states: List[List[float]] = Field(..., description="State vector at each grid time")
    outputs: List[float] = Field(..., description="y(t) at each grid time")

    @model_validator(mode="after")
    def _consistent(self):
        n = len(self.times)
        if not (len(self.states) == len(self.outputs) == len(self.inputs) == n):
            raise ValueError("times, inputs, states and outputs must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        return self

    def time_array(self) -> np.ndarray:
        return np.asarray(self.times)

    def state_array(self) -> np.ndarray:
        return np.asarray(self.states).reshape(len(self.times), len(self.state_names))

    def output_array(self) -> np.ndarray:
        return np.asarray(self.outputs)

    def output_at(self, t: float) -> float:
        """Output at a grid time (nearest grid node)"""
        times = self.time_array()
        return self.outputs[int(np.argmin(np.abs(times - t)))]


class SampledFunction(BaseModel):
    """Function sampled on the uniform grid t0, t0 + h, ..."""
    model_config = ConfigDict(frozen=True)

    h: float = Field(..., gt=0)
    t0: float = 0.0
    values: List[float]

    @field_validator("values")
    @classmethod
    def _finite(cls, values):
        if not all(math.isfinite(v) for v in values):
            raise ValueError("sampled values must be finite")
        return values

    @classmethod
    def from_array(cls, values, h: float, t0: float = 0.0) -> "SampledFunction":
        return cls(h=h, t0=t0, values=np.asarray(values, dtype=float).tolist())

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self.values))

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)
