"""Input classes: evaluation, discontinuities, Laplace transforms, CLI spec strings."""
import cmath
import logging
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import TypeAdapter, ValidationError

from models.signal_models import (
    ImpulseApproxSignal, InputSignal, PiecewiseLinearSignal, PulseSignal, RampSignal, StepSignal, ZeroSignal,
)
from models.simulation_models import SampledFunction
from utils.errors import SignalError

logger = logging.getLogger(__name__)

signal_adapter = TypeAdapter(InputSignal)


def _pwl_value(s: PiecewiseLinearSignal, t: float, left: bool) -> float:
    times = [k[0] for k in s.knots]
    values = [k[1] for k in s.knots]
    before_first = t <= times[0] if left else t < times[0]
    if before_first:
        return 0.0
    return float(np.interp(t, times, values))


def eval_signal(s: InputSignal, t: float) -> float:
    """Right-continuous value u(t); every signal is 0 for t < 0"""
    if isinstance(s, ZeroSignal):
        return 0.0
    if isinstance(s, StepSignal):
        return s.u0 if t >= 0 else 0.0
    if isinstance(s, PulseSignal):
        return s.u0 if s.t_on <= t < s.t_off else 0.0
    if isinstance(s, RampSignal):
        return s.slope * t if t >= 0 else 0.0
    if isinstance(s, ImpulseApproxSignal):
        return s.area / s.width if 0 <= t < s.width else 0.0
    if isinstance(s, PiecewiseLinearSignal):
        return _pwl_value(s, t, left=False)
    raise SignalError(f"Unsupported signal {s!r}")


def signal_left_limit(s: InputSignal, t: float) -> float:
    """Left limit u(t-); differs from eval_signal only at breakpoints"""
    if isinstance(s, ZeroSignal):
        return 0.0
    if isinstance(s, StepSignal):
        return s.u0 if t > 0 else 0.0
    if isinstance(s, PulseSignal):
        return s.u0 if s.t_on < t <= s.t_off else 0.0
    if isinstance(s, RampSignal):
        return s.slope * t if t > 0 else 0.0
    if isinstance(s, ImpulseApproxSignal):
        return s.area / s.width if 0 < t <= s.width else 0.0
    if isinstance(s, PiecewiseLinearSignal):
        return _pwl_value(s, t, left=True)
    raise SignalError(f"Unsupported signal {s!r}")


def signal_values(s: InputSignal, times: Sequence[float]) -> np.ndarray:
    return np.array([eval_signal(s, float(t)) for t in times])


def signal_breakpoints(s: InputSignal) -> List[float]:
    if isinstance(s, ZeroSignal):
        return []
    if isinstance(s, (StepSignal, RampSignal)):
        return [0.0]
    if isinstance(s, PulseSignal):
        return [s.t_on, s.t_off]
    if isinstance(s, ImpulseApproxSignal):
        return [0.0, s.width]
    if isinstance(s, PiecewiseLinearSignal):
        return [k[0] for k in s.knots]
    raise SignalError(f"Unsupported signal {s!r}")


def signal_laplace(s: InputSignal, sigma: complex) -> complex:
    """Laplace transform û(σ) for step, ramp and pulse inputs (Re σ > 0)"""
    sigma = complex(sigma)
    if sigma.real <= 0:
        raise SignalError("Laplace transform requires Re(sigma) > 0")
    if isinstance(s, StepSignal):
        return s.u0 / sigma
    if isinstance(s, RampSignal):
        return s.slope / sigma ** 2
    if isinstance(s, PulseSignal):
        if s.t_off <= 0:
            return 0j
        t_on = max(s.t_on, 0.0)
        return s.u0 * (cmath.exp(-sigma * t_on) - cmath.exp(-sigma * s.t_off)) / sigma
    raise SignalError(f"No Laplace transform for '{s.kind}' signals")


def sample_signal(s: InputSignal, n: int, h: float) -> SampledFunction:
    """Sample on t = 0, h, ..., (n-1)h.

    ImpulseApprox samples are rescaled so their trapezoid integral equals the
    area; a width-h pulse on a step-h grid becomes a discrete unit impulse.
    """
    times = h * np.arange(n)
    values = signal_values(s, times)
    if isinstance(s, ImpulseApproxSignal) and n > 1:
        trapezoid = h * (values.sum() - 0.5 * (values[0] + values[-1]))
        if trapezoid > 0:
            values = values * (s.area / trapezoid)
    return SampledFunction.from_array(values, h=h)


# CLI spec strings

def _floats(body: str, count: int, spec: str) -> List[float]:
    parts = [p for p in body.split(",")]
    if len(parts) != count:
        raise SignalError(f"Signal spec '{spec}' expects {count} value(s)")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise SignalError(f"Signal spec '{spec}' has a non-numeric value") from None


def parse_signal_spec(spec: str) -> InputSignal:
    """Parse ``step:<u0>``, ``pulse:<u0>,<t_on>,<t_off>``, ``ramp:<slope>``,
    ``impulse:<area>,<width>``, ``pwl:<t0>,<v0>;<t1>,<v1>;...`` or ``zero``"""
    text = spec.strip()
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "zero" and not body:
            return ZeroSignal()
        if kind == "step":
            (u0,) = _floats(body, 1, spec)
            return StepSignal(u0=u0)
        if kind == "pulse":
            u0, t_on, t_off = _floats(body, 3, spec)
            return PulseSignal(u0=u0, t_on=t_on, t_off=t_off)
        if kind == "ramp":
            (slope,) = _floats(body, 1, spec)
            return RampSignal(slope=slope)
        if kind == "impulse":
            area, width = _floats(body, 2, spec)
            return ImpulseApproxSignal(area=area, width=width)
        if kind == "pwl":
            knots: List[Tuple[float, float]] = []
            for pair in body.split(";"):
                t, v = _floats(pair, 2, spec)
                knots.append((t, v))
            return PiecewiseLinearSignal(knots=tuple(knots))
    except ValidationError as e:
        raise SignalError(f"Invalid signal spec '{spec}': {e.errors()[0]['msg']}") from None
    raise SignalError(f"Unknown signal spec '{spec}'")


def format_signal_spec(s: InputSignal) -> str:
    if isinstance(s, ZeroSignal):
        return "zero"
    if isinstance(s, StepSignal):
        return f"step:{s.u0!r}"
    if isinstance(s, PulseSignal):
        return f"pulse:{s.u0!r},{s.t_on!r},{s.t_off!r}"
    if isinstance(s, RampSignal):
        return f"ramp:{s.slope!r}"
    if isinstance(s, ImpulseApproxSignal):
        return f"impulse:{s.area!r},{s.width!r}"
    return "pwl:" + ";".join(f"{t!r},{v!r}" for t, v in s.knots)
