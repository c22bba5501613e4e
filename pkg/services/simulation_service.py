"""Breakpoint-aware fixed-step RK4 integration and registry closed forms."""
import logging
import math
from functools import lru_cache
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import Settings, get_settings
from models.expression_models import Expression
from models.signal_models import (
    ImpulseApproxSignal, InputSignal, PulseSignal, RampSignal, StepSignal, ZeroSignal,
)
from models.simulation_models import SampledFunction, SolverConfig, Trajectory
from models.system_models import GeneralSystem
from services.expression_service import differentiate_n, evaluate_expression, parse_expression
from services.signal_service import eval_signal, signal_breakpoints, signal_left_limit, signal_values
from services.system_service import closed_form_names, model_registry
from utils.errors import DivergenceError, NoClosedFormError, UnboundParameterError, WorkbenchError

logger = logging.getLogger(__name__)

StageInputs = Callable[[float, float], Tuple[float, float, float]]


def build_time_grid(
    span: Tuple[float, float],
    h: float,
    breakpoints: Iterable[float] = (),
    extra_times: Iterable[float] = (),
) -> np.ndarray:
    """Uniform h-grid over the span merged with breakpoints and requested sample times.

    Uniform nodes closer than 1e-9 h to an anchor are dropped so no step degenerates.
    """
    t0, t1 = float(span[0]), float(span[1])
    if not t0 < t1:
        raise WorkbenchError(f"Span must satisfy t0 < t1, got [{t0}, {t1}]")
    if not 0 < h <= t1 - t0:
        raise WorkbenchError(f"Step h={h} must lie in (0, {t1 - t0}]")
    anchors = {t0, t1}
    anchors.update(float(t) for t in breakpoints if t0 < t < t1)
    anchors.update(float(t) for t in extra_times if t0 <= t <= t1)
    anchor_array = np.array(sorted(anchors))

    count = int(math.floor((t1 - t0) / h + 1e-9))
    uniform = t0 + h * np.arange(count + 1)
    uniform = uniform[uniform < t1]
    nearest = np.min(np.abs(uniform[:, None] - anchor_array[None, :]), axis=1)
    uniform = uniform[nearest > 1e-9 * h]
    return np.union1d(uniform, anchor_array)


def signal_stage_inputs(sig: InputSignal) -> StageInputs:
    """Inputs for the RK4 stages of a step [ta, tb].

    The step never straddles a breakpoint, so the right value at ta, the
    interior midpoint and the left limit at tb all belong to one smooth piece.
    """
    def stages(ta: float, tb: float) -> Tuple[float, float, float]:
        return eval_signal(sig, ta), eval_signal(sig, 0.5 * (ta + tb)), signal_left_limit(sig, tb)

    return stages


def rk4_march(
    rhs: Callable[[float, np.ndarray, float], np.ndarray],
    x0: np.ndarray,
    grid: np.ndarray,
    stage_inputs: StageInputs,
    divergence_bound: float,
    mask_divergent: bool = False,
) -> np.ndarray:
    """Classical RK4 over consecutive grid nodes.

    x0 has shape (n,) or (n, cells); in the batched form columns that blow up
    are set to NaN instead of aborting the whole march.
    """
    states = np.empty((len(grid),) + x0.shape)
    x = np.array(x0, dtype=float)
    states[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(len(grid) - 1):
            ta, tb = float(grid[i]), float(grid[i + 1])
            dt = tb - ta
            u_a, u_mid, u_b = stage_inputs(ta, tb)
            tm = ta + 0.5 * dt
            k1 = rhs(ta, x, u_a)
            k2 = rhs(tm, x + 0.5 * dt * k1, u_mid)
            k3 = rhs(tm, x + 0.5 * dt * k2, u_mid)
            k4 = rhs(tb, x + dt * k3, u_b)
            x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = ~np.isfinite(x) | (np.abs(x) > divergence_bound)
            if np.any(bad):
                if not mask_divergent:
                    raise DivergenceError(f"State diverged at t={tb:.6g}")
                x = np.where(np.any(bad, axis=0), np.nan, x)
            states[i + 1] = x
    return states


def grid_indices(grid: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """Positions of ``times`` in an integration grid that contains them"""
    times = np.asarray(times, dtype=float)
    index = np.clip(np.searchsorted(grid, times), 0, len(grid) - 1)
    before = np.clip(index - 1, 0, len(grid) - 1)
    index = np.where(np.abs(grid[before] - times) < np.abs(grid[index] - times), before, index)
    if np.any(np.abs(grid[index] - times) > 1e-9 * max(1.0, float(np.max(np.abs(times))))):
        raise WorkbenchError("Sample times are missing from the integration grid")
    return index


class SystemKernel:
    """Right-hand side and output of a GeneralSystem with bound parameters"""

    def __init__(self, sys: GeneralSystem, params: Mapping[str, object]):
        missing = set(sys.param_names) - set(params)
        if missing:
            raise UnboundParameterError(missing)
        self.sys = sys
        self.base_env: Dict[str, object] = {
            name: np.asarray(params[name], dtype=float) if np.ndim(params[name]) else np.float64(params[name])
            for name in sys.param_names
        }

    def env(self, t, x, u) -> Dict[str, object]:
        env = dict(self.base_env)
        env.update(zip(self.sys.state_names, x))
        env["u"] = u
        env["t"] = t
        return env

    def rhs(self, t: float, x: np.ndarray, u: float) -> np.ndarray:
        env = self.env(t, x, u)
        values = [evaluate_expression(e, env) for e in self.sys.rhs]
        if x.ndim == 1:
            return np.array(values, dtype=float)
        return np.array([np.broadcast_to(v, x.shape[1:]) for v in values])

    def outputs(self, times: np.ndarray, states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Output along a trajectory; states has shape (len(times), n, ...)"""
        columns = np.moveaxis(states, 1, 0)
        extra = states.ndim - 2
        shape = (len(times),) + (1,) * extra
        env = self.env(times.reshape(shape), columns, inputs.reshape(shape))
        with np.errstate(over="ignore", invalid="ignore"):
            values = evaluate_expression(self.sys.output, env)
        return np.broadcast_to(values, (len(times),) + states.shape[2:]).astype(float)


class SimulationService:
    """Deterministic integration of expression systems"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def _config(self, cfg: Optional[SolverConfig]) -> SolverConfig:
        return cfg if cfg is not None else SolverConfig(h=self.settings.solver_step)

    def integrate(
        self,
        sys: GeneralSystem,
        params: Mapping[str, float],
        sig: InputSignal,
        span: Tuple[float, float],
        cfg: Optional[SolverConfig] = None,
        extra_times: Sequence[float] = (),
    ) -> Trajectory:
        """Integrate from sys.x0 (zero by default) over the span"""
        cfg = self._config(cfg)
        kernel = SystemKernel(sys, params)
        grid = build_time_grid(span, cfg.h, signal_breakpoints(sig), extra_times)
        states = rk4_march(
            kernel.rhs, sys.initial_state(), grid, signal_stage_inputs(sig), self.settings.divergence_bound
        )
        inputs = signal_values(sig, grid)
        outputs = kernel.outputs(grid, states, inputs)
        if not np.all(np.isfinite(outputs)):
            raise DivergenceError("Output is not finite along the trajectory")
        logger.info(f"Integrated {sys.n_states} state(s) over [{span[0]}, {span[1]}] on {len(grid)} nodes")
        return Trajectory(
            state_names=list(sys.state_names),
            times=grid.tolist(),
            inputs=inputs.tolist(),
            states=states.tolist(),
            outputs=outputs.tolist(),
        )

    def integrate_batch(
        self,
        sys: GeneralSystem,
        params: Mapping[str, object],
        sig: InputSignal,
        sample_times: Sequence[float],
        cfg: Optional[SolverConfig] = None,
    ) -> np.ndarray:
        """Outputs at sample_times for a batch of parameter values.

        Parameters may be arrays of a common length; the result has shape
        (cells, len(sample_times)) and diverged cells are NaN.
        """
        cfg = self._config(cfg)
        kernel = SystemKernel(sys, params)
        sizes = {np.size(v) for v in kernel.base_env.values() if np.ndim(v)}
        if len(sizes) > 1:
            raise WorkbenchError(f"Parameter arrays have different lengths {sorted(sizes)}")
        cells = sizes.pop() if sizes else 1
        sample_times = np.asarray(sample_times, dtype=float)
        if sample_times.size == 0:
            return np.empty((cells, 0))
        span = (0.0, float(max(sample_times.max(), cfg.h)))
        grid = build_time_grid(span, cfg.h, signal_breakpoints(sig), sample_times)
        x0 = np.repeat(sys.initial_state()[:, None], cells, axis=1)
        states = rk4_march(
            kernel.rhs, x0, grid, signal_stage_inputs(sig), self.settings.divergence_bound, mask_divergent=True
        )
        index = grid_indices(grid, sample_times)
        picked_times = grid[index]
        outputs = kernel.outputs(picked_times, states[index], signal_values(sig, picked_times))
        return outputs.T

    def sample_output(
        self,
        sys: GeneralSystem,
        params: Mapping[str, float],
        sig: InputSignal,
        t_end: float,
        h: float,
    ) -> SampledFunction:
        """Output on the uniform grid 0, h, ..., t_end integrated with step h"""
        n = int(round(t_end / h))
        times = h * np.arange(n + 1)
        traj = self.integrate(sys, params, sig, (0.0, float(times[-1])), SolverConfig(h=h), extra_times=times)
        index = grid_indices(traj.time_array(), times)
        return SampledFunction.from_array(traj.output_array()[index], h=h)

    def closed_form_output(
        self,
        model_id: str,
        params: Mapping[str, float],
        sig: InputSignal,
        t: float,
        derivative: int = 0,
        quantity: str = "output",
    ) -> float:
        """Analytic output (or state ``quantity``) of a registry model, or its time derivative.

        The system is at rest for t < 0; t may be +inf.
        """
        entry = model_registry.get(model_id)
        kind, fields = _closed_form_binding(sig)
        record = entry.closed_form(kind)
        if record is None:
            raise NoClosedFormError(f"No closed form for model '{model_id}' under a {sig.kind} input")
        env: Dict[str, float] = dict(entry.default_params)
        env.update({k: float(v) for k, v in params.items()})
        missing = set(entry.system.param_names) - set(env)
        if missing:
            raise UnboundParameterError(missing)
        env.update(fields)
        if t < 0:
            return 0.0

        piece = record.pieces[0]
        for candidate in record.pieces:
            start = float(env[candidate.start]) if candidate.start in fields else float(candidate.start)
            if start <= t:
                piece = candidate
        if quantity == "output":
            text = piece.output
        elif quantity in piece.states:
            text = piece.states[quantity]
        else:
            raise WorkbenchError(f"Model '{model_id}' has no state '{quantity}'")
        expr = _closed_form_expression(text, tuple(closed_form_names(entry.system)), derivative)
        env = {k: np.float64(v) for k, v in env.items()}
        env["t"] = np.float64(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return float(evaluate_expression(expr, env))


def _closed_form_binding(sig: InputSignal) -> Tuple[str, Dict[str, float]]:
    if isinstance(sig, ZeroSignal):
        return "zero", {}
    if isinstance(sig, StepSignal):
        return "step", {"u0": sig.u0}
    if isinstance(sig, PulseSignal):
        if sig.t_off <= 0:
            return "zero", {}
        return "pulse", {"u0": sig.u0, "t_on": max(sig.t_on, 0.0), "t_off": sig.t_off}
    if isinstance(sig, ImpulseApproxSignal):
        return "pulse", {"u0": sig.area / sig.width, "t_on": 0.0, "t_off": sig.width}
    if isinstance(sig, RampSignal):
        return "ramp", {"slope": sig.slope}
    raise NoClosedFormError(f"No closed forms exist for {sig.kind} inputs")


@lru_cache(maxsize=256)
def _closed_form_expression(text: str, names: Tuple[str, ...], derivative: int) -> Expression:
    return differentiate_n(parse_expression(text, [], names), "t", derivative)


# Global service instance
simulation_service = SimulationService()
