from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from models.system_models import ModelFile


class ModelSelection(BaseModel):
    """A registry model or an inline model file, with parameter overrides"""
    model_id: Optional[str] = Field(None, description="Registry id, e.g. scalar-lti")
    model_file: Optional[ModelFile] = Field(None, description="Inline model document")
    params: Dict[str, float] = Field(default_factory=dict, description="Overrides of the default parameters")

    @model_validator(mode="after")
    def _one_source(self):
        if (self.model_id is None) == (self.model_file is None):
            raise ValueError("Give exactly one of model_id and model_file")
        return self


class SimulationRequest(ModelSelection):
    signal: str = Field(..., description="Signal spec, e.g. step:1, pulse:1,0,1, ramp:1")
    span: Tuple[float, float] = Field((0.0, 5.0), description="Integration interval [t0, t1]")
    h: Optional[float] = Field(None, gt=0, description="Solver step (server default when omitted)")


class IdentifyRequest(SimulationRequest):
    free: Optional[List[str]] = Field(None, description="Parameters to analyze (all when omitted)")
    sigma_noise: Optional[float] = Field(None, gt=0, description="Noise level for the Fisher information")
    tol: Optional[float] = Field(None, gt=0, description="Relative rank tolerance")


class LinearSystemPayload(BaseModel):
    """dx/dt = A x + b u, y = c x"""
    A: List[List[float]] = Field(..., description="State matrix")
    b: List[float] = Field(..., description="Input column")
    c: List[float] = Field(..., description="Output row")


class EquivalenceRequest(BaseModel):
    first: LinearSystemPayload
    second: LinearSystemPayload
    tol: Optional[float] = Field(None, gt=0, description="Relative Markov-parameter tolerance")


class ResponseRequest(BaseModel):
    system: LinearSystemPayload
    t_end: float = Field(5.0, gt=0, description="Last sample time")
    h: float = Field(1e-2, gt=0, description="Sample spacing")


class GainResponse(BaseModel):
    gain: float = Field(..., description="Steady-state gain -c A^-1 b")


class EquivalenceResponse(BaseModel):
    equivalent: bool
    T: Optional[List[List[float]]] = Field(None, description="Similarity transform when both systems are minimal of equal size")
    residual: Optional[float] = None


class SampledResponses(BaseModel):
    times: List[float]
    impulse: List[float] = Field(..., description="k(t) = c e^{At} b")
    step: List[float] = Field(..., description="K(t), the integral of k")


class IdentifyResponse(BaseModel):
    param_names: List[str]
    gram: List[List[float]]
    eigenvalues: List[float] = Field(..., description="Gram spectrum, descending")
    rank: int
    null_directions: List[List[float]]
    sigma_noise: float
    crb: List[Optional[float]] = Field(..., description="Cramer-Rao variance bounds; null when unbounded")
