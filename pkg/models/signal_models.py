import math
from typing import Annotated, List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Signal(BaseModel):
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _finite(self):
        for name, value in self:
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        return self


class ZeroSignal(_Signal):
    kind: Literal["zero"] = "zero"


class StepSignal(_Signal):
    """u(t) = u0 for t >= 0"""
    kind: Literal["step"] = "step"
    u0: float = Field(..., description="Step height")


class PulseSignal(_Signal):
    """u(t) = u0 on the half-open window [t_on, t_off).

    Systems start at rest at t = 0, so a window opening before 0 acts like one
    opening at 0.
    """
    kind: Literal["pulse"] = "pulse"
    u0: float = Field(..., description="Pulse height")
    t_on: float = Field(0.0, description="Switch-on time; may be negative")
    t_off: float = Field(..., description="Switch-off time")

    @model_validator(mode="after")
    def _ordered(self):
        if not self.t_on < self.t_off:
            raise ValueError("pulse requires t_on < t_off")
        return self


class RampSignal(_Signal):
    kind: Literal["ramp"] = "ramp"
    slope: float = Field(..., description="u(t) = slope * t for t >= 0")


class ImpulseApproxSignal(_Signal):
    """Narrow pulse of height area/width on [0, width)"""
    kind: Literal["impulse"] = "impulse"
    area: float = Field(1.0, description="Pulse area")
    width: float = Field(..., gt=0, description="Pulse width")


class PiecewiseLinearSignal(_Signal):
    """Linear interpolation between knots, 0 before the first, last value held after the last"""
    kind: Literal["pwl"] = "pwl"
    knots: Tuple[Tuple[float, float], ...] = Field(..., min_length=1)

    @field_validator("knots")
    @classmethod
    def _validate_knots(cls, knots):
        times = [t for t, _ in knots]
        if times[0] < 0:
            raise ValueError("knot times must be nonnegative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if not all(math.isfinite(t) and math.isfinite(v) for t, v in knots):
            raise ValueError("knots must be finite")
        return knots


InputSignal = Annotated[
    Union[ZeroSignal, StepSignal, PulseSignal, RampSignal, ImpulseApproxSignal, PiecewiseLinearSignal],
    Field(discriminator="kind"),
]

SIGNAL_KINDS: List[str] = ["zero", "step", "pulse", "ramp", "impulse", "pwl"]
