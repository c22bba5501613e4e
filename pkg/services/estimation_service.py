"""Synthetic experiments, multi-experiment least squares and grid Bayes updates."""
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.random import default_rng
from scipy import linalg
from scipy.special import logsumexp
from scipy.stats import norm

from config.settings import Settings, get_settings
from models.estimation_models import Experiment, FitResult, PosteriorGrid
from models.signal_models import InputSignal
from models.simulation_models import SolverConfig
from models.system_models import GeneralSystem
from services.identifiability_service import IdentifiabilityService, identifiability_service
from services.simulation_service import SimulationService, grid_indices, simulation_service
from utils.errors import (
    EstimationError, PosteriorError, UnboundParameterError, UnidentifiableError, WorkbenchError,
)

logger = logging.getLogger(__name__)

# Levenberg-Marquardt damping schedule
_DAMPING_START = 1e-3
_DAMPING_FACTOR = 10.0
_DAMPING_MAX = 1e16
_STEP_TOLERANCE = 1e-8
_COST_TOLERANCE = 1e-10


def uniform_prior(axes: Mapping[str, Sequence[float]]) -> PosteriorGrid:
    """Equal weight on every cell of the product grid"""
    grid_axes = {name: [float(v) for v in values] for name, values in axes.items()}
    cells = int(np.prod([len(v) for v in grid_axes.values()]))
    return PosteriorGrid(axes=grid_axes, log_weights=[-float(np.log(cells))] * cells)


def linear_axis(lo: float, hi: float, cells: int) -> List[float]:
    if not lo < hi or cells < 2:
        raise WorkbenchError(f"Axis needs lo < hi and at least 2 cells, got [{lo}, {hi}] with {cells}")
    return np.linspace(lo, hi, cells).tolist()


class EstimationService:
    """Data generation and parameter estimation from experiments"""

    def __init__(
        self,
        settings: Optional[Settings] = None,
        simulator: Optional[SimulationService] = None,
        identifier: Optional[IdentifiabilityService] = None,
    ):
        self.settings = settings or get_settings()
        self.simulator = simulator or simulation_service
        self.identifier = identifier or identifiability_service

    def synthesize_data(
        self,
        sys: GeneralSystem,
        params: Mapping[str, float],
        sig: InputSignal,
        sample_times: Sequence[float],
        sigma_noise: float,
        seed: int,
        cfg: Optional[SolverConfig] = None,
        recorded_sigma: Optional[float] = None,
    ) -> Experiment:
        """Simulated output at sample_times plus seeded i.i.d. Gaussian noise.

        Noise-free experiments record the nominal noise level unless
        ``recorded_sigma`` says otherwise.
        """
        if sigma_noise < 0:
            raise WorkbenchError(f"sigma_noise must be >= 0, got {sigma_noise}")
        times = np.asarray(sample_times, dtype=float)
        exact = self._predict(sys, params, sig, times, cfg)
        observations = exact
        if sigma_noise > 0:
            observations = exact + default_rng(seed).normal(0.0, sigma_noise, size=len(times))
        if recorded_sigma is None:
            recorded_sigma = sigma_noise if sigma_noise > 0 else self.settings.nominal_noise
        return Experiment(
            signal=sig, sample_times=times.tolist(), observations=observations.tolist(), sigma_noise=recorded_sigma,
        )

    def _predict(
        self,
        sys: GeneralSystem,
        params: Mapping[str, float],
        sig: InputSignal,
        times: np.ndarray,
        cfg: Optional[SolverConfig],
    ) -> np.ndarray:
        span = (0.0, float(max(times.max(), self._step(cfg))))
        traj = self.simulator.integrate(sys, params, sig, span, cfg, extra_times=times)
        return traj.output_array()[grid_indices(traj.time_array(), times)]

    def _step(self, cfg: Optional[SolverConfig]) -> float:
        return cfg.h if cfg is not None else self.settings.solver_step

    # Least squares

    def _residuals(
        self,
        sys: GeneralSystem,
        params: Dict[str, float],
        free: List[str],
        experiments: Sequence[Experiment],
        cfg: Optional[SolverConfig],
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Standardized residuals (model - observation)/sigma and their Jacobian"""
        residuals, jacobians = [], []
        for e in experiments:
            times = e.times_array()
            span = (0.0, float(max(times.max(), self._step(cfg))))
            S = self.identifier.sensitivity_trajectories(sys, params, e.signal, span, cfg, free, times)
            index = grid_indices(S.time_array(), times)
            outputs = np.asarray(S.outputs)[index]
            residuals.append((outputs - e.observation_array()) / e.sigma_noise)
            jacobians.append(S.matrix()[index] / e.sigma_noise)
        return np.concatenate(residuals), np.vstack(jacobians)

    def _covariance(self, J: np.ndarray) -> np.ndarray:
        """(J^T J)^+ with tiny eigenvalues floored at eps * lambda_max"""
        values, vectors = linalg.eigh(J.T @ J)
        largest = max(float(values.max()), np.finfo(float).tiny)
        floor = np.finfo(float).eps * largest
        values = np.where(values < self.settings.gram_rank_tolerance * largest, floor, values)
        values = np.maximum(values, floor)
        return (vectors / values) @ vectors.T

    def least_squares_fit(
        self,
        sys: GeneralSystem,
        experiments: Sequence[Experiment],
        theta0: Mapping[str, float],
        bounds: Optional[Mapping[str, Tuple[float, float]]] = None,
        fixed: Optional[Mapping[str, float]] = None,
        cfg: Optional[SolverConfig] = None,
        max_iterations: Optional[int] = None,
    ) -> FitResult:
        """Damped Gauss-Newton (Levenberg-Marquardt) over the parameters in theta0.

        Parameters not in theta0 are taken from ``fixed``. Non-convergence
        returns the best point found with ``converged=False``.
        """
        if not experiments:
            raise EstimationError("At least one experiment is required")
        free = list(theta0)
        if not free:
            raise EstimationError("No free parameters")
        fixed = dict(fixed or {})
        missing = set(sys.param_names) - set(free) - set(fixed)
        if missing:
            raise UnboundParameterError(missing)
        bounds = dict(bounds or {})
        lower = np.array([bounds.get(name, (-np.inf, np.inf))[0] for name in free], dtype=float)
        upper = np.array([bounds.get(name, (-np.inf, np.inf))[1] for name in free], dtype=float)
        theta = np.array([theta0[name] for name in free], dtype=float)
        if np.any(theta < lower) or np.any(theta > upper):
            raise EstimationError("Initial guess lies outside the bounds")
        max_iterations = max_iterations or self.settings.fit_max_iterations

        def evaluate(point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            params = {**fixed, **dict(zip(free, point.tolist()))}
            return self._residuals(sys, params, free, experiments, cfg)

        r, J = evaluate(theta)
        null_columns = np.linalg.norm(J, axis=0) <= self.settings.zero_sensitivity_floor
        if np.all(null_columns):
            raise UnidentifiableError(f"Output is insensitive to {free} at the initial guess")
        cost = float(r @ r)
        damping = _DAMPING_START
        converged, message, iteration = False, "iteration limit reached", 0

        for iteration in range(1, max_iterations + 1):
            if cost == 0.0:
                converged, message = True, "exact fit"
                break
            JtJ = J.T @ J
            gradient = J.T @ r
            scale = max(float(np.max(np.diag(JtJ))), np.finfo(float).tiny)
            step = -linalg.solve(JtJ + damping * scale * np.eye(len(free)), gradient, assume_a="sym")
            candidate = np.clip(theta + step, lower, upper)
            actual_step = candidate - theta
            small_step = np.linalg.norm(actual_step) <= _STEP_TOLERANCE * (1.0 + np.linalg.norm(theta))
            try:
                r_new, J_new = evaluate(candidate)
                cost_new = float(r_new @ r_new)
            except WorkbenchError as e:
                logger.debug(f"Trial point {candidate} rejected: {e}")
                cost_new = np.inf
            logger.debug(f"iteration {iteration}: cost {cost:.6g} -> {cost_new:.6g}, damping {damping:.1e}")

            if cost_new < cost:
                decrease = cost - cost_new
                theta, r, J, cost = candidate, r_new, J_new, cost_new
                damping = max(damping / _DAMPING_FACTOR, 1e-16)
                if small_step or decrease <= _COST_TOLERANCE * cost or cost == 0.0:
                    converged, message = True, "converged"
                    break
            else:
                if small_step:
                    converged, message = True, "converged (no further decrease)"
                    break
                damping *= _DAMPING_FACTOR
                if damping > _DAMPING_MAX:
                    message = "damping limit reached"
                    break

        estimate = {**fixed, **dict(zip(free, theta.tolist()))}
        if converged:
            logger.info(f"Fit converged after {iteration} iteration(s): {estimate}, residual {cost:.6g}")
        else:
            logger.warning(f"Fit did not converge ({message}); returning best point {estimate}")
        return FitResult(
            param_names=free,
            params=estimate,
            residual=cost,
            covariance=self._covariance(J).tolist(),
            iterations=iteration,
            converged=converged,
            message=message,
        )

    # Bayes

    def log_likelihood(
        self,
        grid: PosteriorGrid,
        e: Experiment,
        sys: GeneralSystem,
        fixed: Optional[Mapping[str, float]] = None,
        cfg: Optional[SolverConfig] = None,
    ) -> np.ndarray:
        """Gaussian log-likelihood of e in every cell; -inf where the model diverges"""
        params: Dict[str, object] = dict(fixed or {})
        params.update(grid.cell_values())
        missing = set(sys.param_names) - set(params)
        if missing:
            raise UnboundParameterError(missing)
        predicted = self.simulator.integrate_batch(sys, params, e.signal, e.sample_times, cfg)
        with np.errstate(invalid="ignore"):
            terms = norm.logpdf(e.observation_array()[None, :], loc=predicted, scale=e.sigma_noise)
        loglik = terms.sum(axis=1)
        return np.where(np.isfinite(loglik), loglik, -np.inf)

    def bayes_update(
        self,
        prior: PosteriorGrid,
        e: Experiment,
        sys: GeneralSystem,
        fixed: Optional[Mapping[str, float]] = None,
        cfg: Optional[SolverConfig] = None,
    ) -> PosteriorGrid:
        """Posterior over the grid after observing e, normalized in log space"""
        weights = np.asarray(prior.log_weights, dtype=float) + self.log_likelihood(prior, e, sys, fixed, cfg)
        if not np.any(np.isfinite(weights)):
            raise PosteriorError("Every cell has zero likelihood; model and data are inconsistent")
        weights = weights - logsumexp(weights)
        posterior = PosteriorGrid(axes=prior.axes, log_weights=weights.tolist())
        logger.info(f"Posterior mode {posterior.mode()} after {len(e.sample_times)} sample(s)")
        return posterior


# Global service instance
estimation_service = EstimationService()
