import io

import numpy as np
import pandas as pd
import pytest

from models.signal_models import StepSignal
from models.estimation_models import PosteriorGrid
from models.simulation_models import SampledFunction
from services.estimation_service import uniform_prior
from services.export_service import (
    experiment_to_frame, frame_to_csv, identifiability_report, posterior_to_frame, read_experiment,
    read_posterior, read_sampled_function, read_trajectory, sampled_to_frame, trajectory_to_frame,
)
from services.identifiability_service import identifiability_service
from services.simulation_service import simulation_service
from utils.errors import InputFileError


class TestSampledFunctions:
    def test_round_trip_is_bit_identical(self, tmp_path):
        f = SampledFunction.from_array(np.exp(-0.1 * np.arange(11)) / 3.0, h=0.1)
        path = tmp_path / "k.csv"
        frame_to_csv(sampled_to_frame(f), path)
        loaded = read_sampled_function(path)
        assert loaded.values == f.values
        assert loaded.h == pytest.approx(0.1, rel=1e-12)
        assert loaded.t0 == 0.0

    @pytest.mark.parametrize("text", [
        "t,value\n0,1\n",
        "t,value\n0,1\n0.1,2\n0.3,3\n",
        "t,value\n0.1,1\n0,2\n",
        "t,amount\n0,1\n0.1,2\n",
        "t,value\n0,1\n0.1,\n",
    ])
    def test_invalid_files(self, text):
        with pytest.raises(InputFileError):
            read_sampled_function(io.StringIO(text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFileError):
            read_sampled_function(tmp_path / "absent.csv")


class TestExperiments:
    def test_read(self):
        e = read_experiment(io.StringIO("t,observation\n0.5,1.25\n1.0,2.0\n"), StepSignal(u0=1.0), 0.1)
        assert e.sample_times == [0.5, 1.0]
        assert e.observations == [1.25, 2.0]
        assert e.sigma_noise == 0.1

    def test_round_trip(self):
        e = read_experiment(io.StringIO("t,observation\n0.5,0.1\n1.0,0.7\n"), StepSignal(u0=1.0), 0.1)
        text = frame_to_csv(experiment_to_frame(e))
        assert read_experiment(io.StringIO(text), e.signal, e.sigma_noise) == e

    @pytest.mark.parametrize("text", [
        "t,observation\n1.0,1\n0.5,2\n",
        "t,observation\n0.5,abc\n",
        "time,observation\n0.5,1\n",
    ])
    def test_invalid(self, text):
        with pytest.raises(InputFileError):
            read_experiment(io.StringIO(text), StepSignal(u0=1.0), 0.1)


class TestFrames:
    def test_trajectory_columns(self, lambda_system, coarse):
        traj = simulation_service.integrate(
            lambda_system.system, lambda_system.default_params, StepSignal(u0=1.0), (0.0, 1.0), coarse
        )
        frame = trajectory_to_frame(traj)
        assert list(frame.columns) == ["t", "u", "y", "x_x", "x_z"]
        assert len(frame) == len(traj.times)
        reread = pd.read_csv(io.StringIO(frame_to_csv(frame)), float_precision="round_trip")
        assert reread["y"].tolist() == traj.outputs

    def test_posterior_frame(self):
        frame = posterior_to_frame(uniform_prior({"a": [1.0, 2.0], "b": [0.0, 1.0, 2.0]}))
        assert list(frame.columns) == ["a", "b", "probability"]
        assert frame["probability"].sum() == pytest.approx(1.0)
        assert frame["b"].tolist() == [0.0, 1.0, 2.0, 0.0, 1.0, 2.0]


class TestReport:
    def test_sections(self, lambda_system, coarse):
        S = identifiability_service.sensitivity_trajectories(
            lambda_system.system, lambda_system.default_params, StepSignal(u0=1.0), (0.0, 2.0), coarse
        )
        text = identifiability_report(
            identifiability_service.gram_matrix(S), identifiability_service.fisher_cramer_rao(S, 0.01)
        )
        assert text.startswith("# gram rank 1 of 2")
        assert "# null directions" in text
        assert "# cramer-rao bounds (sigma 0.01, fim rank 1)" in text
        assert "lambda,inf,inf" in text

    def test_without_fisher(self, scalar_lti, coarse):
        S = identifiability_service.sensitivity_trajectories(
            scalar_lti.system, scalar_lti.default_params, StepSignal(u0=1.0), (0.0, 2.0), coarse, free=["a"]
        )
        text = identifiability_report(identifiability_service.gram_matrix(S))
        assert "cramer-rao" not in text
        assert "null directions" not in text


class TestReingestion:
    def test_trajectory_round_trip(self, lambda_system, coarse):
        traj = simulation_service.integrate(
            lambda_system.system, lambda_system.default_params, StepSignal(u0=1.0), (0.0, 1.0), coarse
        )
        assert read_trajectory(io.StringIO(frame_to_csv(trajectory_to_frame(traj)))) == traj

    def test_trajectory_from_file(self, scalar_lti, coarse, tmp_path):
        traj = simulation_service.integrate(
            scalar_lti.system, scalar_lti.default_params, StepSignal(u0=1.0), (0.0, 0.5), coarse
        )
        path = tmp_path / "traj.csv"
        frame_to_csv(trajectory_to_frame(traj), path)
        loaded = read_trajectory(path)
        assert loaded.state_names == ["x"]
        assert loaded.outputs == traj.outputs

    @pytest.mark.parametrize("text", ["t,u\n0,1\n", "t,u,y,x_x\n0,1,1,1\n0,1,1,1\n", "t,u,y\n0,a,1\n"])
    def test_invalid_trajectory(self, text):
        with pytest.raises(InputFileError):
            read_trajectory(io.StringIO(text))

    def test_posterior_round_trip(self):
        p = np.array([0.1, 0.2, 0.0, 0.3, 0.25, 0.15])
        with np.errstate(divide="ignore"):
            grid = PosteriorGrid(axes={"a": [1.0, 2.0], "b": [0.0, 0.5, 1.0]}, log_weights=np.log(p).tolist())
        loaded = read_posterior(io.StringIO(frame_to_csv(posterior_to_frame(grid))))
        assert loaded.axes == grid.axes
        np.testing.assert_allclose(loaded.probabilities(), grid.probabilities(), rtol=1e-12, atol=0)
        assert loaded.log_weights[2] == -np.inf

    @pytest.mark.parametrize("text", [
        "probability\n1\n",
        "a,b,probability\n1,0,0.5\n1,1,0.5\n2,0,0\n",
        "a,b,probability\n1,0,0.5\n1,1,0.5\n2,1,0\n2,0,0\n",
        "a,probability\n1,-0.5\n2,1.5\n",
        "a,probability\n1,0\n2,0\n",
    ])
    def test_invalid_posterior(self, text):
        with pytest.raises(InputFileError):
            read_posterior(io.StringIO(text))

    def test_named_column(self):
        f = read_sampled_function(io.StringIO("t,impulse,step\n0,1,0\n0.5,0.5,0.25\n"), "step")
        assert f.values == [0.0, 0.25]
