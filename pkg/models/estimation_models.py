import math
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from models.signal_models import InputSignal


class Experiment(BaseModel):
    """One input applied, the output sampled, noise level known"""
    model_config = ConfigDict(frozen=True)

    signal: InputSignal
    sample_times: List[float] = Field(..., min_length=1)
    observations: List[float]
    sigma_noise: float = Field(..., gt=0, description="Known noise standard deviation")

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.sample_times) != len(self.observations):
            raise ValueError("sample_times and observations must have equal length")
        if any(b <= a for a, b in zip(self.sample_times, self.sample_times[1:])):
            raise ValueError("sample_times must be increasing")
        if self.sample_times[0] < 0:
            raise ValueError("sample_times must be nonnegative")
        if not all(math.isfinite(v) for v in self.observations):
            raise ValueError("observations must be finite")
        return self

    def times_array(self) -> np.ndarray:
        return np.asarray(self.sample_times, dtype=float)

    def observation_array(self) -> np.ndarray:
        return np.asarray(self.observations, dtype=float)


class FitResult(BaseModel):
    param_names: List[str]
    params: Dict[str, float] = Field(..., description="Estimate, free and fixed parameters together")
    residual: float = Field(..., description="Sum of squared standardized residuals at the estimate")
    covariance: List[List[float]] = Field(..., description="Covariance of the free parameters")
    iterations: int
    converged: bool
    message: str = ""

    def covariance_matrix(self) -> np.ndarray:
        return np.asarray(self.covariance, dtype=float)


class PosteriorGrid(BaseModel):
    """Discretized posterior; cells are the C-ordered product of the axes"""
    axes: Dict[str, List[float]]
    log_weights: List[float]

    @model_validator(mode="after")
    def _consistent(self):
        if not self.axes:
            raise ValueError("PosteriorGrid needs at least one axis")
        if any(len(values) == 0 for values in self.axes.values()):
            raise ValueError("axes must be nonempty")
        if len(self.log_weights) != int(np.prod(self.shape)):
            raise ValueError(f"Expected {int(np.prod(self.shape))} log weights, got {len(self.log_weights)}")
        if any(math.isnan(v) or v == math.inf for v in self.log_weights):
            raise ValueError("log weights must be finite or -inf")
        return self

    @property
    def names(self) -> List[str]:
        return list(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(values) for values in self.axes.values())

    def cell_values(self) -> Dict[str, np.ndarray]:
        """Parameter value of every cell, flattened in C order"""
        mesh = np.meshgrid(*[np.asarray(v, dtype=float) for v in self.axes.values()], indexing="ij")
        return {name: grid.ravel() for name, grid in zip(self.names, mesh)}

    def probabilities(self) -> np.ndarray:
        weights = np.asarray(self.log_weights, dtype=float)
        return np.exp(weights - logsumexp(weights))

    def mode(self) -> Dict[str, float]:
        index = int(np.argmax(self.log_weights))
        return {name: float(values[index]) for name, values in self.cell_values().items()}

    def marginal(self, name: str) -> np.ndarray:
        axis = self.names.index(name)
        p = self.probabilities().reshape(self.shape)
        others = tuple(i for i in range(len(self.shape)) if i != axis)
        return p.sum(axis=others) if others else p

    def mean(self, name: str) -> float:
        return float(np.dot(self.marginal(name), self.axes[name]))

    def std(self, name: str) -> float:
        values = np.asarray(self.axes[name], dtype=float)
        p = self.marginal(name)
        mu = float(np.dot(p, values))
        return float(np.sqrt(max(np.dot(p, (values - mu) ** 2), 0.0)))
