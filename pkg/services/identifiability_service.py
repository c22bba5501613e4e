"""Local identifiability: output sensitivities, Gram and Fisher analysis, direct estimators."""
import logging
import math
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial
from scipy import linalg

from config.settings import Settings, get_settings
from models.expression_models import Expression, StateVar
from models.identifiability_models import FisherReport, GramReport, Interval, RateEstimate, SensitivityTrajectory
from models.signal_models import InputSignal
from models.simulation_models import SampledFunction, SolverConfig
from models.system_models import GeneralSystem
from services.expression_service import differentiate_expression, evaluate_expression, make_add, make_mul
from services.simulation_service import SimulationService, SystemKernel, simulation_service
from utils.errors import EstimationError, IntervalError, UnboundParameterError, WorkbenchError

logger = logging.getLogger(__name__)

Bound = Union[float, Interval]

# (window, degree) used when fit_derivative is called without them
_ORDER_DEFAULTS = {0: (0.1, 4), 1: (0.1, 4), 2: (0.1, 4), 3: (0.2, 6), 4: (0.2, 6)}


def sensitivity_state_names(sys: GeneralSystem, free: Sequence[str]) -> List[List[str]]:
    """names[k][j] is the state holding d x_k / d theta_j"""
    taken = set(sys.state_names) | set(sys.param_names)
    prefix = "_s"
    while any(name.startswith(prefix) for name in taken):
        prefix = "_" + prefix
    return [[f"{prefix}{k}_{j}" for j in range(len(free))] for k in range(sys.n_states)]


def augmented_system(sys: GeneralSystem, free: Sequence[str]) -> Tuple[GeneralSystem, List[Expression]]:
    """System extended by the forward sensitivity equations, and the output sensitivity expressions.

    ds_j/dt = (df/dx) s_j + df/dtheta_j with s_j(0) = 0, and
    dy/dtheta_j = (dg/dx) s_j + dg/dtheta_j.
    """
    names = sensitivity_state_names(sys, free)
    states = sys.state_names
    jac_x = [[differentiate_expression(f, x) for x in states] for f in sys.rhs]
    out_x = [differentiate_expression(sys.output, x) for x in states]

    rhs = list(sys.rhs)
    output_sensitivities: List[Expression] = []
    for j, theta in enumerate(free):
        for k, f in enumerate(sys.rhs):
            expr = differentiate_expression(f, theta)
            for m in range(sys.n_states):
                expr = make_add(expr, make_mul(jac_x[k][m], StateVar(name=names[m][j])))
            rhs.append(expr)
        expr = differentiate_expression(sys.output, theta)
        for m in range(sys.n_states):
            expr = make_add(expr, make_mul(out_x[m], StateVar(name=names[m][j])))
        output_sensitivities.append(expr)

    augmented = GeneralSystem(
        state_names=list(states) + [names[k][j] for j in range(len(free)) for k in range(sys.n_states)],
        param_names=list(sys.param_names),
        rhs=rhs,
        output=sys.output,
        x0=list(sys.initial_state()) + [0.0] * (sys.n_states * len(free)),
    )
    return augmented, output_sensitivities


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    weights = np.zeros_like(times)
    weights[:-1] += 0.5 * dt
    weights[1:] += 0.5 * dt
    return weights


def _descending_eigh(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = linalg.eigh(matrix)
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


class IdentifiabilityService:
    """Sensitivity-based identifiability analysis and the derivative estimators"""

    def __init__(self, settings: Optional[Settings] = None, simulator: Optional[SimulationService] = None):
        self.settings = settings or get_settings()
        self.simulator = simulator or simulation_service

    def sensitivity_trajectories(
        self,
        sys: GeneralSystem,
        params: Mapping[str, float],
        sig: InputSignal,
        span: Tuple[float, float],
        cfg: Optional[SolverConfig] = None,
        free: Optional[Sequence[str]] = None,
        extra_times: Sequence[float] = (),
    ) -> SensitivityTrajectory:
        """Output sensitivities for the free parameters (all parameters by default)"""
        free = list(sys.param_names if free is None else free)
        unknown = set(free) - set(sys.param_names)
        if unknown:
            raise UnboundParameterError(unknown)
        augmented, output_sensitivities = augmented_system(sys, free)
        traj = self.simulator.integrate(augmented, params, sig, span, cfg, extra_times)

        times = traj.time_array()
        kernel = SystemKernel(augmented, params)
        env = kernel.env(times, traj.state_array().T, np.asarray(traj.inputs))
        columns = [np.broadcast_to(evaluate_expression(e, env), times.shape) for e in output_sensitivities]
        S = np.column_stack(columns) if columns else np.zeros((len(times), 0))
        logger.info(f"Computed sensitivities for {free} on {len(times)} nodes")
        return SensitivityTrajectory(
            times=traj.times, param_names=free, S=S.tolist(), outputs=traj.outputs,
        )

    def gram_matrix(self, S: SensitivityTrajectory, tol: Optional[float] = None) -> GramReport:
        """G = integral of S^T S (trapezoid) with its spectrum and null directions"""
        tol = self.settings.gram_rank_tolerance if tol is None else tol
        times = S.time_array()
        if len(times) < 2:
            raise EstimationError("Gram matrix needs at least 2 time points")
        if not S.param_names:
            raise EstimationError("No free parameters")
        M = S.matrix()
        G = (M * _trapezoid_weights(times)[:, None]).T @ M
        G = 0.5 * (G + G.T)
        values, vectors = _descending_eigh(G)
        span = times[-1] - times[0]
        largest = max(values[0], 0.0) if len(values) else 0.0
        threshold = max(tol * largest, self.settings.zero_sensitivity_floor * span)
        keep = values > threshold
        return GramReport(
            param_names=S.param_names,
            G=G.tolist(),
            eigenvalues=values.tolist(),
            eigenvectors=vectors.T.tolist(),
            rank=int(keep.sum()),
            null_directions=vectors[:, ~keep].T.tolist(),
            threshold=float(threshold),
        )

    def fisher_cramer_rao(
        self, S: SensitivityTrajectory, sigma_noise: float, tol: Optional[float] = None
    ) -> FisherReport:
        """FIM = sum_i S_i^T S_i / sigma^2 and crb = diag(FIM^+), infinite along null directions"""
        if sigma_noise <= 0:
            raise WorkbenchError(f"sigma_noise must be positive, got {sigma_noise}")
        if not S.param_names:
            raise EstimationError("No free parameters")
        tol = self.settings.gram_rank_tolerance if tol is None else tol
        M = S.matrix()
        fim = M.T @ M / sigma_noise ** 2
        fim = 0.5 * (fim + fim.T)
        values, vectors = _descending_eigh(fim)
        largest = max(values[0], 0.0) if len(values) else 0.0
        floor = self.settings.zero_sensitivity_floor * len(S.times) / sigma_noise ** 2
        keep = values > max(tol * largest, floor)

        kept = vectors[:, keep]
        pinv = (kept / values[keep]) @ kept.T
        crb = np.diag(pinv).copy()
        null = vectors[:, ~keep]
        if null.size:
            crb[np.any(np.abs(null) > 1e-6, axis=1)] = math.inf
        return FisherReport(
            param_names=S.param_names,
            sigma_noise=sigma_noise,
            fim=fim.tolist(),
            eigenvalues=values.tolist(),
            rank=int(keep.sum()),
            crb=crb.tolist(),
        )

    # Derivatives from data

    def fit_derivative(
        self,
        f: SampledFunction,
        t0: float,
        order: int,
        side: str = "right",
        window: Optional[float] = None,
        degree: Optional[int] = None,
    ) -> float:
        """order! times the (t - t0)^order coefficient of a least-squares polynomial fit near t0"""
        if order not in _ORDER_DEFAULTS:
            raise EstimationError(f"Derivative order must be 0..4, got {order}")
        default_window, default_degree = _ORDER_DEFAULTS[order]
        window = default_window if window is None else window
        degree = default_degree if degree is None else degree
        if degree < order:
            raise EstimationError(f"Polynomial degree {degree} is below derivative order {order}")
        if window <= 0:
            raise EstimationError("Fit window must be positive")

        slack = 1e-9 * f.h
        if side == "right":
            lo, hi = t0, t0 + window
        elif side == "left":
            lo, hi = t0 - window, t0
        elif side == "central":
            lo, hi = t0 - 0.5 * window, t0 + 0.5 * window
        else:
            raise EstimationError(f"Unknown side '{side}'")
        times, values = f.times(), f.array()
        mask = (times >= lo - slack) & (times <= hi + slack)
        if mask.sum() < degree + 2:
            raise EstimationError(
                f"Only {int(mask.sum())} samples in [{lo:.6g}, {hi:.6g}]; need at least {degree + 2}"
            )
        scaled = (times[mask] - t0) / window
        coefficients = polynomial.polyfit(scaled, values[mask], degree)
        return float(math.factorial(order) * coefficients[order] / window ** order)

    def estimate_a_from_step(self, K: SampledFunction) -> float:
        """a = -K''(0) / K'(0)"""
        slope = self.fit_derivative(K, 0.0, 1)
        if abs(slope) < 1e-12:
            logger.warning("Step response has no initial slope")
            raise EstimationError(f"K'(0) estimate {slope:.3g} is too small to divide by")
        return -self.fit_derivative(K, 0.0, 2) / slope

    def estimate_lambda_from_ramp(
        self, y: SampledFunction, window: Optional[float] = None, degree: Optional[int] = None
    ) -> float:
        """lambda = y''''(0+) / 2 for the unit-ramp response"""
        return self.fit_derivative(y, 0.0, 4, "right", window, degree) / 2.0

    def estimate_lambda_from_pulse(self, y: SampledFunction, t_off: float = 1.0) -> float:
        """lambda = -ln(1 + y'(1+)) for the response to the unit pulse on [0, 1)"""
        if abs(t_off - 1.0) > 1e-12:
            raise EstimationError(f"Pulse estimator only applies to t_off = 1, got {t_off}")
        slope = self.fit_derivative(y, t_off, 1, "right")
        argument = 1.0 + slope
        if argument <= 0:
            raise EstimationError(f"1 + y'(t_off+) = {argument:.6g} is not positive; no rate is consistent")
        return -math.log(argument)

    def estimate_rates_from_state(
        self,
        x: SampledFunction,
        u: SampledFunction,
        t1: float,
        t2: float,
        kprime0: Optional[float] = None,
    ) -> RateEstimate:
        """(a, b) from x'(t_i) = -a x(t_i) + b u(t_i) at two times; c = K'(0)/b when K'(0) is given"""
        rows, rhs = [], []
        for t in (t1, t2):
            level = self.fit_derivative(x, t, 0, "central")
            slope = self.fit_derivative(x, t, 1, "central")
            rows.append([-level, float(np.interp(t, u.times(), u.array()))])
            rhs.append(slope)
        system = np.array(rows)
        if np.linalg.cond(system) > 1e12:
            raise EstimationError(f"State and input at t={t1} and t={t2} do not determine (a, b)")
        a, b = linalg.solve(system, np.array(rhs))
        c = None
        if kprime0 is not None:
            if b == 0:
                raise EstimationError("b estimate is zero; c = K'(0)/b is undefined")
            c = kprime0 / b
        return RateEstimate(a=float(a), b=float(b), c=c)

    def propagate_gray_box(self, kprime0: Bound, c: Bound) -> Bound:
        """b = K'(0) / c for values or intervals"""
        if not isinstance(kprime0, Interval) and not isinstance(c, Interval):
            if c == 0:
                raise IntervalError("c must be nonzero")
            return float(kprime0) / float(c)
        return Interval.coerce(kprime0) / Interval.coerce(c)


# Global service instance
identifiability_service = IdentifiabilityService()
