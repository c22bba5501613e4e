"""Linear time-invariant analysis: responses, invariants, equivalence, deconvolution."""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid

from config.settings import Settings, get_settings
from models.lti_models import MinimalityReport, SimilarityCertificate
from models.simulation_models import SampledFunction
from models.system_models import LinearSystem
from services.simulation_service import build_time_grid, rk4_march
from utils.errors import (
    DimensionError, NonMinimalError, NotEquivalentError, SignalError, SingularSystemError, WorkbenchError,
)

logger = logging.getLogger(__name__)


def _no_input(ta: float, tb: float) -> Tuple[float, float, float]:
    return 0.0, 0.0, 0.0


def _check_same_grid(f: SampledFunction, g: SampledFunction) -> None:
    if abs(f.h - g.h) > 1e-9 * f.h or f.t0 != g.t0 or len(f.values) != len(g.values):
        raise DimensionError(
            f"Grid mismatch: (h={f.h}, t0={f.t0}, n={len(f.values)}) vs (h={g.h}, t0={g.t0}, n={len(g.values)})"
        )


def _rank(matrix: np.ndarray, tol: float) -> int:
    s = linalg.svdvals(matrix)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def reachability_matrix(sys: LinearSystem) -> np.ndarray:
    A, b = sys.A_matrix, sys.b_vector
    columns = [b]
    for _ in range(sys.n - 1):
        columns.append(A @ columns[-1])
    return np.column_stack(columns)


def observability_matrix(sys: LinearSystem) -> np.ndarray:
    A, c = sys.A_matrix, sys.c_vector
    rows = [c]
    for _ in range(sys.n - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


class LTIAnalysisService:
    """Analysis of LinearSystem triples (A, b, c)"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    # Responses

    def _march(self, sys: LinearSystem, grid: np.ndarray, quadrature: bool) -> np.ndarray:
        """Integrate dx/dt = A x from x(0) = b, optionally with q' = c x appended"""
        A, b, c = sys.A_matrix, sys.b_vector, sys.c_vector
        if quadrature:
            def rhs(t, x, u):
                return np.append(A @ x[:-1], c @ x[:-1])
            x0 = np.append(b, 0.0)
        else:
            def rhs(t, x, u):
                return A @ x
            x0 = b
        return rk4_march(rhs, x0, grid, _no_input, self.settings.divergence_bound)

    def _grid_to(self, t: float) -> np.ndarray:
        h = min(self.settings.solver_step, t)
        return build_time_grid((0.0, t), h)

    def impulse_response(self, sys: LinearSystem, t: float) -> float:
        """k(t) = c e^{At} b"""
        if t < 0:
            raise WorkbenchError(f"Impulse response requires t >= 0, got {t}")
        if sys.n == 1:
            return float(sys.c[0] * sys.b[0] * np.exp(sys.A[0][0] * t))
        if t == 0:
            return float(sys.c_vector @ sys.b_vector)
        states = self._march(sys, self._grid_to(t), quadrature=False)
        return float(sys.c_vector @ states[-1])

    def step_response(self, sys: LinearSystem, t: float) -> float:
        """K(t), the integral of k over [0, t]"""
        if t < 0:
            raise WorkbenchError(f"Step response requires t >= 0, got {t}")
        if t == 0:
            return 0.0
        states = self._march(sys, self._grid_to(t), quadrature=True)
        return float(states[-1][-1])

    def sample_impulse_response(self, sys: LinearSystem, n: int, h: float) -> SampledFunction:
        grid = h * np.arange(n)
        if sys.n == 1:
            return SampledFunction.from_array(sys.c[0] * sys.b[0] * np.exp(sys.A[0][0] * grid), h=h)
        states = self._march(sys, grid, quadrature=False)
        return SampledFunction.from_array(states @ sys.c_vector, h=h)

    def sample_step_response(self, sys: LinearSystem, n: int, h: float) -> SampledFunction:
        states = self._march(sys, h * np.arange(n), quadrature=True)
        return SampledFunction.from_array(states[:, -1], h=h)

    def convolve(self, k: SampledFunction, u: SampledFunction) -> SampledFunction:
        """Trapezoid-rule y(t_n) = int_0^{t_n} k(t_n - r) u(r) dr"""
        _check_same_grid(k, u)
        if k.t0 != 0:
            raise DimensionError("Convolution operands must start at t0 = 0")
        kv, uv = k.array(), u.array()
        full = np.convolve(kv, uv)[: len(kv)]
        y = k.h * (full - 0.5 * (kv * uv[0] + kv[0] * uv))
        return SampledFunction.from_array(y, h=k.h)

    def predict_from_step_response(self, K: SampledFunction, u: SampledFunction) -> SampledFunction:
        """Output for input u given only the sampled step response: y = d/dt (K * u)"""
        integrated = self.convolve(K, u).array()
        if len(integrated) < 3:
            raise DimensionError("Need at least 3 samples to differentiate")
        return SampledFunction.from_array(np.gradient(integrated, K.h, edge_order=2), h=K.h)

    # Invariants

    def steady_state_gain(self, sys: LinearSystem) -> float:
        """-c A^{-1} b"""
        A = sys.A_matrix
        if _rank(A, self.settings.rank_tolerance) < sys.n:
            raise SingularSystemError("A is singular; the steady-state gain is undefined")
        if np.any(np.linalg.eigvals(A).real >= 0):
            logger.warning("A is not Hurwitz; the gain is not reached as a steady state")
        return float(-sys.c_vector @ linalg.solve(A, sys.b_vector))

    def markov_parameters(self, sys: LinearSystem, m: int) -> List[float]:
        """[cb, cAb, ..., cA^{m-1}b]"""
        if m < 1:
            raise WorkbenchError(f"m must be >= 1, got {m}")
        A, v, c = sys.A_matrix, sys.b_vector, sys.c_vector
        values = []
        for _ in range(m):
            values.append(float(c @ v))
            v = A @ v
        return values

    def minimality(self, sys: LinearSystem, tol: Optional[float] = None) -> MinimalityReport:
        tol = self.settings.rank_tolerance if tol is None else tol
        if tol <= 0:
            raise WorkbenchError("Rank tolerance must be positive")
        reach = _rank(reachability_matrix(sys), tol)
        obs = _rank(observability_matrix(sys), tol)
        return MinimalityReport(n=sys.n, reach_rank=reach, obs_rank=obs, minimal=reach == sys.n and obs == sys.n)

    def _require_minimal(self, *systems: LinearSystem) -> None:
        for index, sys in enumerate(systems, start=1):
            report = self.minimality(sys)
            if not report.minimal:
                raise NonMinimalError(
                    f"System {index} is not minimal (reach rank {report.reach_rank}, "
                    f"obs rank {report.obs_rank}, n={report.n})"
                )

    def io_equivalent(self, s1: LinearSystem, s2: LinearSystem, tol: Optional[float] = None) -> bool:
        """Equal i/o behavior of two minimal triples, decided on 2 max(n1, n2) Markov parameters"""
        tol = self.settings.equivalence_tolerance if tol is None else tol
        self._require_minimal(s1, s2)
        m = 2 * max(s1.n, s2.n)
        p1 = np.array(self.markov_parameters(s1, m))
        p2 = np.array(self.markov_parameters(s2, m))
        scale = max(np.max(np.abs(p1)), np.max(np.abs(p2)))
        return bool(np.all(np.abs(p1 - p2) <= tol * scale))

    def find_similarity(self, s1: LinearSystem, s2: LinearSystem, tol: Optional[float] = None) -> SimilarityCertificate:
        """T = R2 R1^{-1}, checked against the triples"""
        tol = self.settings.equivalence_tolerance if tol is None else tol
        if s1.n != s2.n:
            raise DimensionError(f"Systems have different dimensions {s1.n} and {s2.n}")
        if not self.io_equivalent(s1, s2, tol):
            raise NotEquivalentError("Systems are not i/o equivalent; no similarity exists")
        R1, R2 = reachability_matrix(s1), reachability_matrix(s2)
        if _rank(R1, self.settings.rank_tolerance) < s1.n:
            raise SingularSystemError("Reachability matrix of the first system is singular")
        T = linalg.solve(R1.T, R2.T).T
        T_inv = linalg.inv(T)
        residual = (
            linalg.norm(T @ s1.A_matrix @ T_inv - s2.A_matrix)
            + linalg.norm(T @ s1.b_vector - s2.b_vector)
            + linalg.norm(s1.c_vector @ T_inv - s2.c_vector)
        )
        scale = 1.0 + linalg.norm(s2.A_matrix) + linalg.norm(s2.b_vector) + linalg.norm(s2.c_vector)
        if residual > max(tol, 1e-9) * scale:
            raise NotEquivalentError(f"Similarity check failed with residual {residual:.3g}")
        return SimilarityCertificate(T=T.tolist(), residual=float(residual))

    def frequency_response(self, sys: LinearSystem, sigma: complex) -> complex:
        """W(sigma) = c (sigma I - A)^{-1} b"""
        resolvent = complex(sigma) * np.eye(sys.n) - sys.A_matrix
        if _rank(resolvent, self.settings.rank_tolerance) < sys.n:
            raise SingularSystemError(f"sigma={sigma} is an eigenvalue of A")
        return complex(sys.c_vector @ linalg.solve(resolvent, sys.b_vector.astype(complex)))

    # Data

    def deconvolution_matrix(self, u: SampledFunction) -> np.ndarray:
        """Lower-triangular M with (M k)_n the trapezoid value of (k * u)(t_n)"""
        uv = u.array()
        n = len(uv)
        M = linalg.toeplitz(uv, np.r_[uv[0], np.zeros(n - 1)])
        M[1:, 0] *= 0.5
        M[np.arange(1, n), np.arange(1, n)] *= 0.5
        M[0, :] = 0.0
        return u.h * M

    def deconvolve_impulse(
        self, y: SampledFunction, u: SampledFunction, ridge: Optional[float] = None
    ) -> SampledFunction:
        """Recover k from y = k * u by regularized least squares.

        ``ridge`` defaults to ridge_scale * trace(M^T M) / m; ridge = 0 gives
        the minimum-norm least-squares solution.
        """
        _check_same_grid(y, u)
        if not np.any(u.array()):
            raise SignalError("Input is identically zero; the impulse response is not determined")
        if ridge is not None and ridge < 0:
            raise WorkbenchError(f"ridge must be >= 0, got {ridge}")
        M = self.deconvolution_matrix(u)
        yv = y.array()
        m = M.shape[1]
        if ridge is None:
            ridge = self.settings.ridge_scale * float(np.sum(M * M)) / m
        if ridge > 0:
            normal = M.T @ M + ridge * np.eye(m)
            k = linalg.solve(normal, M.T @ yv, assume_a="pos")
        else:
            k, *_ = linalg.lstsq(M, yv, lapack_driver="gelsy")
        logger.info(f"Deconvolved {m} samples with ridge={ridge:.3g}")
        return SampledFunction.from_array(k, h=y.h, t0=y.t0)

    def laplace_transform_sampled(self, f: SampledFunction, sigma: float) -> float:
        """Trapezoid estimate of int e^{-sigma t} f(t) dt over the sampled range"""
        times = f.times()
        return float(trapezoid(np.exp(-sigma * times) * f.array(), times))

    def empirical_transfer(self, y: SampledFunction, u: SampledFunction, sigma: float) -> float:
        """W(sigma) estimated as y_hat / u_hat from sampled data"""
        _check_same_grid(y, u)
        u_hat = self.laplace_transform_sampled(u, sigma)
        if u_hat == 0:
            raise SignalError(f"Input transform vanishes at sigma={sigma}")
        return self.laplace_transform_sampled(y, sigma) / u_hat

    # Symmetry

    def symmetry_orbit(self, a: float, b: float, c: float, T: float) -> Tuple[float, float, float]:
        """(a, b, c) -> (a, T b, c / T), which leaves every Markov parameter unchanged"""
        if T == 0:
            raise WorkbenchError("Symmetry parameter T must be nonzero")
        return a, T * b, c / T


# Global service instance
lti_service = LTIAnalysisService()
