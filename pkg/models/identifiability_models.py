import math
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import IntervalError


class SensitivityTrajectory(BaseModel):
    """dy/dtheta_j along a time grid; row i of S belongs to times[i]"""
    model_config = ConfigDict(frozen=True)

    times: List[float]
    param_names: List[str]
    S: List[List[float]] = Field(..., description="len(times) x len(param_names) output sensitivities")
    outputs: List[float] = Field(..., description="Nominal output y(t) on the same grid")

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.S) != len(self.times) or len(self.outputs) != len(self.times):
            raise ValueError("S and outputs need one row per time")
        if any(len(row) != len(self.param_names) for row in self.S):
            raise ValueError("S needs one column per parameter")
        if not all(math.isfinite(v) for row in self.S for v in row):
            raise ValueError("sensitivities must be finite")
        return self

    def matrix(self) -> np.ndarray:
        return np.asarray(self.S, dtype=float).reshape(len(self.times), len(self.param_names))

    def time_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def column(self, name: str) -> np.ndarray:
        return self.matrix()[:, self.param_names.index(name)]


class GramReport(BaseModel):
    param_names: List[str]
    G: List[List[float]] = Field(..., description="Trapezoid-weighted integral of S^T S")
    eigenvalues: List[float] = Field(..., description="Descending")
    eigenvectors: List[List[float]] = Field(..., description="eigenvectors[k] belongs to eigenvalues[k]")
    rank: int
    null_directions: List[List[float]]
    threshold: float = Field(..., description="Eigenvalues at or below this count as null")


class FisherReport(BaseModel):
    """Fisher information over the sample grid and Cramer-Rao lower bounds"""
    param_names: List[str]
    sigma_noise: float = Field(..., gt=0)
    fim: List[List[float]]
    eigenvalues: List[float]
    rank: int
    crb: List[float] = Field(..., description="Variance lower bound per parameter; inf when unidentifiable")

    def bound(self, name: str) -> float:
        return self.crb[self.param_names.index(name)]


class Interval(BaseModel):
    """Closed real interval [lo, hi] with exact (non-rounded) endpoint arithmetic"""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo <= self.hi:
            raise ValueError(f"Interval needs lo <= hi, got [{self.lo}, {self.hi}]")
        return self

    @classmethod
    def point(cls, value: float) -> "Interval":
        return cls(lo=value, hi=value)

    @classmethod
    def coerce(cls, value: Union["Interval", float]) -> "Interval":
        return value if isinstance(value, Interval) else cls.point(float(value))

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __mul__(self, other: Union["Interval", float]) -> "Interval":
        other = Interval.coerce(other)
        products = [self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi]
        return Interval(lo=min(products), hi=max(products))

    def __truediv__(self, other: Union["Interval", float]) -> "Interval":
        other = Interval.coerce(other)
        if other.contains(0.0):
            raise IntervalError(f"Division by an interval containing zero: [{other.lo}, {other.hi}]")
        return self * Interval(lo=1.0 / other.hi, hi=1.0 / other.lo)


class RateEstimate(BaseModel):
    """(a, b) of dx/dt = -a x + b u from a measured state"""
    a: float
    b: float
    c: Optional[float] = Field(None, description="K'(0)/b when the step-response slope is known")
