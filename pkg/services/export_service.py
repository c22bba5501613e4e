"""CSV import/export of trajectories, sampled functions, experiments, posteriors and reports."""
import io
import logging
from pathlib import Path
from typing import List, Optional, TextIO, Union

import numpy as np
import pandas as pd

from models.estimation_models import Experiment, PosteriorGrid
from models.identifiability_models import FisherReport, GramReport
from models.signal_models import InputSignal
from models.simulation_models import SampledFunction, Trajectory
from utils.errors import InputFileError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

Target = Union[str, Path, TextIO]


def _read_frame(source: Target, columns) -> pd.DataFrame:
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise InputFileError(f"Cannot read CSV: {e}") from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputFileError(f"CSV is missing column(s) {missing}; found {list(frame.columns)}")
    frame = frame[list(columns)]
    if frame.isna().any().any():
        raise InputFileError("CSV contains empty or non-numeric cells")
    try:
        return frame.astype(float)
    except ValueError as e:
        raise InputFileError(f"CSV contains non-numeric values: {e}") from e


def _read_header(source: Target) -> List[str]:
    try:
        header = pd.read_csv(source, nrows=0).columns.tolist()
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise InputFileError(f"Cannot read CSV: {e}") from e
    if hasattr(source, "seek"):
        source.seek(0)
    return header


def frame_to_csv(frame: pd.DataFrame, target: Optional[Target] = None) -> str:
    """CSV text of a frame; also written to ``target`` when given"""
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if target is not None:
        if isinstance(target, (str, Path)):
            Path(target).write_text(text)
        else:
            target.write(text)
    return text


# Trajectories

def trajectory_to_frame(traj: Trajectory) -> pd.DataFrame:
    """Columns t, u, y, x_<state>..."""
    frame = pd.DataFrame({"t": traj.times, "u": traj.inputs, "y": traj.outputs})
    states = traj.state_array()
    for k, name in enumerate(traj.state_names):
        frame[f"x_{name}"] = states[:, k]
    return frame


def read_trajectory(source: Target) -> Trajectory:
    """Inverse of trajectory_to_frame; state columns are the ones prefixed x_"""
    header = _read_header(source)
    state_columns = [c for c in header if c.startswith("x_")]
    frame = _read_frame(source, ["t", "u", "y"] + state_columns)
    try:
        return Trajectory(
            state_names=[c[2:] for c in state_columns],
            times=frame["t"].tolist(),
            inputs=frame["u"].tolist(),
            states=frame[state_columns].to_numpy().tolist(),
            outputs=frame["y"].tolist(),
        )
    except ValueError as e:
        raise InputFileError(f"Invalid trajectory data: {e}") from e


# Sampled functions

def sampled_to_frame(f: SampledFunction) -> pd.DataFrame:
    return pd.DataFrame({"t": f.times(), "value": f.array()})


def read_sampled_function(source: Target, column: str = "value") -> SampledFunction:
    """Load ``t,<column>`` rows; the grid must be uniform within 1e-9 h"""
    frame = _read_frame(source, ["t", column])
    times = frame["t"].to_numpy()
    if len(times) < 2:
        raise InputFileError("A sampled function needs at least 2 rows")
    h = float(times[1] - times[0])
    if h <= 0:
        raise InputFileError("Sample times must be increasing")
    expected = times[0] + h * np.arange(len(times))
    if np.max(np.abs(times - expected)) > 1e-9 * h:
        raise InputFileError("Sample times are not on a uniform grid")
    values = frame[column].to_numpy()
    if not np.all(np.isfinite(values)):
        raise InputFileError("Sampled values must be finite")
    return SampledFunction.from_array(values, h=h, t0=float(times[0]))


# Experiments

def experiment_to_frame(e: Experiment) -> pd.DataFrame:
    return pd.DataFrame({"t": e.sample_times, "observation": e.observations})


def read_experiment(source: Target, signal: InputSignal, sigma_noise: float) -> Experiment:
    frame = _read_frame(source, ["t", "observation"])
    try:
        return Experiment(
            signal=signal,
            sample_times=frame["t"].tolist(),
            observations=frame["observation"].tolist(),
            sigma_noise=sigma_noise,
        )
    except ValueError as e:
        raise InputFileError(f"Invalid experiment data: {e}") from e


# Posterior and identifiability reports

def posterior_to_frame(grid: PosteriorGrid) -> pd.DataFrame:
    """One row per cell: parameter values then probability"""
    frame = pd.DataFrame(grid.cell_values())
    frame["probability"] = grid.probabilities()
    return frame


def read_posterior(source: Target) -> PosteriorGrid:
    """Inverse of posterior_to_frame: every column but probability is a C-ordered axis"""
    header = _read_header(source)
    names = [c for c in header if c != "probability"]
    if not names:
        raise InputFileError("Posterior CSV has no parameter columns")
    frame = _read_frame(source, names + ["probability"])
    axes = {name: pd.unique(frame[name]).tolist() for name in names}
    probabilities = frame["probability"].to_numpy()
    if np.any(probabilities < 0) or not np.any(probabilities > 0):
        raise InputFileError("Probabilities must be nonnegative with a positive total")
    with np.errstate(divide="ignore"):
        log_weights = np.log(probabilities)
    try:
        grid = PosteriorGrid(axes=axes, log_weights=log_weights.tolist())
    except ValueError as e:
        raise InputFileError(f"Invalid posterior grid: {e}") from e
    cells = grid.cell_values()
    if any(not np.array_equal(cells[name], frame[name].to_numpy()) for name in names):
        raise InputFileError("Posterior rows are not the C-ordered product of their axes")
    return grid


def eigen_frame(report: GramReport) -> pd.DataFrame:
    frame = pd.DataFrame(report.eigenvectors, columns=report.param_names)
    frame.insert(0, "eigenvalue", report.eigenvalues)
    frame.insert(1, "null", [value <= report.threshold for value in report.eigenvalues])
    return frame


def bounds_frame(report: FisherReport) -> pd.DataFrame:
    return pd.DataFrame({
        "param": report.param_names,
        "crb_variance": report.crb,
        "crb_std": np.sqrt(report.crb),
    })


def identifiability_report(gram: GramReport, fisher: Optional[FisherReport] = None) -> str:
    """Plain-text report: Gram spectrum table, null directions, Cramer-Rao bounds"""
    out = io.StringIO()
    out.write(f"# gram rank {gram.rank} of {len(gram.param_names)} (threshold {gram.threshold:.3g})\n")
    frame_to_csv(eigen_frame(gram), out)
    if gram.null_directions:
        out.write("# null directions\n")
        frame_to_csv(pd.DataFrame(gram.null_directions, columns=gram.param_names), out)
    if fisher is not None:
        out.write(f"# cramer-rao bounds (sigma {fisher.sigma_noise:.6g}, fim rank {fisher.rank})\n")
        frame_to_csv(bounds_frame(fisher), out)
    return out.getvalue()
