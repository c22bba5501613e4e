"""Command-line front end of the identifiability workbench.

    python cli.py simulate --model scalar-lti --param a=2 --signal step:1 --span 0,5
    python cli.py gain --a 2 --b 1 --c 2
    python cli.py demo paper
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config.settings import Settings, get_settings
from models.simulation_models import SolverConfig
from models.system_models import GeneralSystem, LinearSystem
from services.demo_service import DemoService, report_table
from services.estimation_service import estimation_service, linear_axis, uniform_prior
from services.export_service import (
    experiment_to_frame, frame_to_csv, identifiability_report, posterior_to_frame, read_experiment,
    read_sampled_function, sampled_to_frame, trajectory_to_frame,
)
from services.identifiability_service import identifiability_service
from services.lti_service import lti_service
from services.signal_service import parse_signal_spec
from services.simulation_service import simulation_service
from services.system_service import build_linear_system, get_registry_model, load_model_file
from utils.errors import ConvergenceError, WorkbenchError, exit_code_for

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


class CommandLineError(WorkbenchError):
    """Bad arguments; reported with exit code 1 instead of argparse's 2"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CommandLineError(message)


# Argument parsing helpers

def _floats(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CommandLineError(f"{what} must be comma-separated numbers, got '{text}'") from None


def _assignments(items: Optional[Sequence[str]], what: str = "--param") -> Dict[str, str]:
    result = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise CommandLineError(f"{what} expects name=value, got '{item}'")
        result[name.strip()] = value.strip()
    return result


def _numbers(items: Optional[Sequence[str]], what: str = "--param") -> Dict[str, float]:
    values = {}
    for name, text in _assignments(items, what).items():
        try:
            values[name] = float(text)
        except ValueError:
            raise CommandLineError(f"{what} {name} must be a number, got '{text}'") from None
    return values


def _span(text: str) -> Tuple[float, float]:
    values = _floats(text, "--span")
    if len(values) != 2:
        raise CommandLineError(f"--span expects t0,t1, got '{text}'")
    return values[0], values[1]


def _axis(text: str, default_cells: int) -> List[float]:
    """lo:hi[:cells]"""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise CommandLineError(f"Axis spec must be lo:hi[:cells], got '{text}'")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        cells = int(parts[2]) if len(parts) == 3 else default_cells
    except ValueError:
        raise CommandLineError(f"Axis spec must be lo:hi[:cells], got '{text}'") from None
    return linear_axis(lo, hi, cells)


def _matrix(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise CommandLineError(f"{what} must be JSON, got '{text}'") from None


def _linear_system(text: str) -> LinearSystem:
    """``a,b,c`` for dx/dt = -a x + b u, y = c x, or JSON {"A": .., "b": .., "c": ..}"""
    if text.lstrip().startswith("{"):
        data = _matrix(text, "system")
        return build_linear_system(data.get("A"), data.get("b"), data.get("c"))
    values = _floats(text, "system")
    if len(values) != 3:
        raise CommandLineError(f"Scalar system expects a,b,c, got '{text}'")
    return LinearSystem.scalar(*values)


def _linear_from_flags(args) -> LinearSystem:
    if args.A is not None:
        return build_linear_system(_matrix(args.A, "--A"), _matrix(args.B, "--B"), _matrix(args.C, "--C"))
    if None in (args.a, args.b, args.c):
        raise CommandLineError("Give --a --b --c or --A --B --C")
    return LinearSystem.scalar(args.a, args.b, args.c)


def _model(args) -> Tuple[GeneralSystem, Dict[str, float]]:
    if args.model_file:
        system, defaults = load_model_file(args.model_file)
    else:
        entry = get_registry_model(args.model)
        system, defaults = entry.system, dict(entry.default_params)
    return system, {**defaults, **_numbers(args.param)}


def _solver(args, settings: Settings) -> SolverConfig:
    return SolverConfig(h=args.h if args.h is not None else settings.solver_step)


def _emit(text: str, target: Optional[str], out: TextIO) -> None:
    if target:
        Path(target).write_text(text)
        logger.info(f"Wrote {target}")
    else:
        out.write(text)


def _experiments(args, settings: Settings):
    if len(args.signal) != len(args.data):
        raise CommandLineError("Give one --signal per --data file")
    sigma = args.sigma if args.sigma is not None else settings.nominal_noise
    return [read_experiment(path, parse_signal_spec(spec), sigma) for path, spec in zip(args.data, args.signal)]


# Subcommands

def cmd_simulate(args, out: TextIO, settings: Settings) -> int:
    system, params = _model(args)
    traj = simulation_service.integrate(system, params, parse_signal_spec(args.signal), _span(args.span),
                                        _solver(args, settings))
    _emit(frame_to_csv(trajectory_to_frame(traj)), args.out, out)
    return 0


def cmd_synthesize(args, out: TextIO, settings: Settings) -> int:
    system, params = _model(args)
    times = _axis(args.times, settings.posterior_cells)
    experiment = estimation_service.synthesize_data(
        system, params, parse_signal_spec(args.signal), times, args.noise, args.seed, _solver(args, settings),
    )
    _emit(frame_to_csv(experiment_to_frame(experiment)), args.out, out)
    return 0


def cmd_respond(args, out: TextIO, settings: Settings) -> int:
    system = _linear_from_flags(args)
    h = args.h if args.h is not None else settings.solver_step
    n = int(round(args.t_end / h)) + 1
    k = lti_service.sample_impulse_response(system, n, h)
    K = lti_service.sample_step_response(system, n, h)
    frame = pd.DataFrame({"t": k.times(), "impulse": k.array(), "step": K.array()})
    _emit(frame_to_csv(frame), args.out, out)
    return 0


def cmd_gain(args, out: TextIO, settings: Settings) -> int:
    gamma = lti_service.steady_state_gain(_linear_from_flags(args))
    out.write(f"{gamma:.17g}\n")
    return 0


def cmd_equiv(args, out: TextIO, settings: Settings) -> int:
    s1, s2 = _linear_system(args.first), _linear_system(args.second)
    if not lti_service.io_equivalent(s1, s2, args.tol):
        out.write("not equivalent\n")
        return 0
    if s1.n != s2.n:
        out.write("equivalent\n")
        return 0
    certificate = lti_service.find_similarity(s1, s2, args.tol)
    T = np.asarray(certificate.T)
    shown = f"{T[0, 0]:.12g}" if T.size == 1 else json.dumps(np.round(T, 12).tolist())
    out.write(f"equivalent, T={shown}\n")
    return 0


def cmd_identify(args, out: TextIO, settings: Settings) -> int:
    system, params = _model(args)
    free = args.free.split(",") if args.free else None
    S = identifiability_service.sensitivity_trajectories(
        system, params, parse_signal_spec(args.signal), _span(args.span), _solver(args, settings), free,
    )
    gram = identifiability_service.gram_matrix(S, args.tol)
    sigma = args.sigma if args.sigma is not None else settings.nominal_noise
    fisher = identifiability_service.fisher_cramer_rao(S, sigma, args.tol)
    _emit(identifiability_report(gram, fisher), args.out, out)
    return 0


def cmd_fit(args, out: TextIO, settings: Settings) -> int:
    system, params = _model(args)
    theta0 = _numbers(args.theta0, "--theta0")
    if not theta0:
        raise CommandLineError("Give at least one --theta0 name=value")
    bounds = {}
    for name, text in _assignments(args.bound, "--bound").items():
        values = _floats(text, f"--bound {name}")
        if len(values) != 2:
            raise CommandLineError(f"--bound {name} expects lo,hi")
        bounds[name] = (values[0], values[1])
    fixed = {k: v for k, v in params.items() if k not in theta0}
    result = estimation_service.least_squares_fit(
        system, _experiments(args, settings), theta0, bounds, fixed, _solver(args, settings),
    )
    std = np.sqrt(np.clip(np.diag(result.covariance_matrix()), 0.0, None))
    frame = pd.DataFrame({
        "param": result.param_names,
        "estimate": [result.params[name] for name in result.param_names],
        "std": std,
    })
    out.write(frame.to_string(index=False) + "\n")
    out.write(f"residual {result.residual:.6g} after {result.iterations} iteration(s): {result.message}\n")
    if not result.converged:
        raise ConvergenceError(f"Fit did not converge: {result.message}")
    return 0


def cmd_posterior(args, out: TextIO, settings: Settings) -> int:
    system, params = _model(args)
    axes = {name: _axis(text, settings.posterior_cells) for name, text in _assignments(args.prior, "--prior").items()}
    if not axes:
        raise CommandLineError("Give at least one --prior name=lo:hi[:cells]")
    fixed = {k: v for k, v in params.items() if k not in axes}
    posterior = uniform_prior(axes)
    for experiment in _experiments(args, settings):
        posterior = estimation_service.bayes_update(posterior, experiment, system, fixed, _solver(args, settings))
    _emit(frame_to_csv(posterior_to_frame(posterior)), args.out, out)
    return 0


def cmd_deconvolve(args, out: TextIO, settings: Settings) -> int:
    y = read_sampled_function(args.output, args.output_column)
    u = read_sampled_function(args.input, args.input_column)
    k = lti_service.deconvolve_impulse(y, u, args.ridge)
    _emit(frame_to_csv(sampled_to_frame(k)), args.out, out)
    return 0


def cmd_demo(args, out: TextIO, settings: Settings) -> int:
    report = DemoService(settings, args.seed).run()
    out.write(report_table(report) + "\n")
    failed = [c.name for c in report.checks if not c.passed]
    out.write(f"{len(report.checks) - len(failed)}/{len(report.checks)} checks passed\n")
    if failed:
        logger.error(f"Failed checks: {', '.join(failed)}")
        return exit_code_for(ConvergenceError())
    return 0


# Parser

def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="Registry model id")
    source.add_argument("--model-file", help="JSON model file")
    parser.add_argument("--param", action="append", metavar="NAME=VALUE", help="Parameter override")


def _add_linear_arguments(parser: argparse.ArgumentParser) -> None:
    for name in ("a", "b", "c"):
        parser.add_argument(f"--{name}", type=float, help=f"Scalar {name} of dx/dt = -a x + b u, y = c x")
    parser.add_argument("--A", help="State matrix as JSON")
    parser.add_argument("--B", help="Input column as JSON")
    parser.add_argument("--C", help="Output row as JSON")


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", action="append", required=True, help="Experiments CSV with t,observation")
    parser.add_argument("--signal", action="append", required=True, help="Input of the matching --data file")
    parser.add_argument("--sigma", type=float, help="Observation noise standard deviation")


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = _Parser(prog="cli.py", description="Identifiability workbench")
    parser.add_argument("--seed", type=int, default=settings.default_seed, help="Noise generator seed")
    parser.add_argument("--h", type=float, help=f"Solver step (default {settings.solver_step})")
    parser.add_argument("--tol", type=float, help="Rank/equivalence tolerance")
    parser.add_argument("--ridge", type=float, help="Deconvolution ridge (default scaled to the input)")
    parser.add_argument("--log-level", default=settings.log_level)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = commands.add_parser("simulate", help="Trajectory CSV t,u,y,x_<state>...")
    _add_model_arguments(simulate)
    simulate.add_argument("--signal", required=True, help="e.g. step:1, pulse:1,0,1, ramp:1")
    simulate.add_argument("--span", default="0,5")
    simulate.add_argument("--out")
    simulate.set_defaults(handler=cmd_simulate)

    synthesize = commands.add_parser("synthesize", help="Experiments CSV from a simulated model")
    _add_model_arguments(synthesize)
    synthesize.add_argument("--signal", required=True)
    synthesize.add_argument("--times", required=True, help="Sample times lo:hi:count")
    synthesize.add_argument("--noise", type=float, default=0.0, help="Noise standard deviation")
    synthesize.add_argument("--out")
    synthesize.set_defaults(handler=cmd_synthesize)

    respond = commands.add_parser("respond", help="Impulse and step response CSV")
    _add_linear_arguments(respond)
    respond.add_argument("--t-end", type=float, default=5.0)
    respond.add_argument("--out")
    respond.set_defaults(handler=cmd_respond)

    gain = commands.add_parser("gain", help="Steady-state gain -c A^-1 b")
    _add_linear_arguments(gain)
    gain.set_defaults(handler=cmd_gain)

    equiv = commands.add_parser("equiv", help="I/O equivalence and similarity of two systems")
    equiv.add_argument("first", help="a,b,c or JSON {\"A\":..,\"b\":..,\"c\":..}")
    equiv.add_argument("second")
    equiv.set_defaults(handler=cmd_equiv)

    identify = commands.add_parser("identify", help="Gram report, Cramer-Rao bounds and null directions")
    _add_model_arguments(identify)
    identify.add_argument("--signal", required=True)
    identify.add_argument("--span", default="0,5")
    identify.add_argument("--free", help="Comma-separated parameters (default all)")
    identify.add_argument("--sigma", type=float)
    identify.add_argument("--out")
    identify.set_defaults(handler=cmd_identify)

    fit = commands.add_parser("fit", help="Least-squares parameter estimate")
    _add_model_arguments(fit)
    _add_experiment_arguments(fit)
    fit.add_argument("--theta0", action="append", metavar="NAME=VALUE", help="Free parameter and start value")
    fit.add_argument("--bound", action="append", metavar="NAME=LO,HI")
    fit.set_defaults(handler=cmd_fit)

    posterior = commands.add_parser("posterior", help="Grid posterior CSV")
    _add_model_arguments(posterior)
    _add_experiment_arguments(posterior)
    posterior.add_argument("--prior", action="append", metavar="NAME=LO:HI[:CELLS]", help="Uniform prior axis")
    posterior.add_argument("--out")
    posterior.set_defaults(handler=cmd_posterior)

    deconvolve = commands.add_parser("deconvolve", help="Impulse response from sampled output and input")
    deconvolve.add_argument("--output", required=True, help="CSV t,value of y")
    deconvolve.add_argument("--input", required=True, help="CSV t,value of u")
    deconvolve.add_argument("--output-column", default="value", help="Column of --output holding y")
    deconvolve.add_argument("--input-column", default="value", help="Column of --input holding u")
    deconvolve.add_argument("--out")
    deconvolve.set_defaults(handler=cmd_deconvolve)

    demo = commands.add_parser("demo", help="Run the acceptance battery")
    demo.add_argument("battery", choices=["paper"])
    demo.set_defaults(handler=cmd_demo)
    return parser


def run_command(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None) -> int:
    """Parse argv, run one subcommand and return its exit code"""
    out = out or sys.stdout
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=str(args.log_level).upper(), format=LOG_FORMAT)
        return args.handler(args, out, settings)
    except SystemExit as e:
        return int(e.code or 0)
    except WorkbenchError as e:
        logger.error(f"{_command_name(argv)} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return exit_code_for(e)
    except ValidationError as e:
        logger.error(f"{_command_name(argv)} rejected: {e}")
        sys.stderr.write(f"error: {e}\n")
        return exit_code_for(CommandLineError())


def _command_name(argv: Optional[Sequence[str]]) -> str:
    words = [w for w in (argv if argv is not None else sys.argv[1:]) if not w.startswith("-")]
    return words[0] if words else "command"


if __name__ == "__main__":
    sys.exit(run_command())
