from fastapi import APIRouter, HTTPException
from fastapi.responses import StreamingResponse
from typing import Dict, Any, Tuple
import io
import logging

from models.api_models import ModelSelection, SimulationRequest
from models.simulation_models import SolverConfig, Trajectory
from models.system_models import GeneralSystem
from services.export_service import frame_to_csv, trajectory_to_frame
from services.signal_service import parse_signal_spec
from services.simulation_service import simulation_service
from services.system_service import general_system_from_model_file, get_registry_model, model_registry
from utils.errors import WorkbenchError, http_status_for

logger = logging.getLogger(__name__)
router = APIRouter(tags=["Models and Simulation"])


def resolve_model(request: ModelSelection) -> Tuple[GeneralSystem, Dict[str, float]]:
    """System and merged parameters for a registry id or inline model file"""
    if request.model_file is not None:
        system = general_system_from_model_file(request.model_file)
        defaults = request.model_file.defaults()
    else:
        entry = get_registry_model(request.model_id)
        system, defaults = entry.system, dict(entry.default_params)
    return system, {**defaults, **request.params}


def solver_for(request: SimulationRequest) -> SolverConfig:
    return SolverConfig() if request.h is None else SolverConfig(h=request.h)


def _run_simulation(request: SimulationRequest) -> Trajectory:
    system, params = resolve_model(request)
    return simulation_service.integrate(
        system, params, parse_signal_spec(request.signal), request.span, solver_for(request)
    )


@router.get("/models")
async def list_models() -> Dict[str, Any]:
    """Registry of worked example models"""
    return {"models": model_registry.summary()}


@router.get("/models/{model_id}")
async def get_model(model_id: str) -> Dict[str, Any]:
    """Model file, default parameters and closed-form input classes of one registry model"""
    try:
        entry = get_registry_model(model_id)
    except WorkbenchError as e:
        logger.error(f"Model lookup failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))
    return {
        "id": entry.id,
        "description": entry.description,
        "model_file": entry.source.model_dump() if entry.source else None,
        "default_params": entry.default_params,
        "closed_forms": [record.signal_kind for record in entry.closed_forms],
    }


@router.post("/simulate", response_model=Trajectory)
async def simulate(request: SimulationRequest) -> Trajectory:
    """
    Integrate a model under one input signal

    Returns the time grid (including signal breakpoints), input, states and output.
    """
    try:
        traj = _run_simulation(request)
        logger.info(f"Simulation: {len(traj.times)} nodes, final output {traj.outputs[-1]:.6g}")
        return traj
    except (WorkbenchError, ValueError) as e:
        logger.error(f"Simulation failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))


@router.post("/simulate/csv")
async def simulate_csv(request: SimulationRequest):
    """Trajectory as a CSV download with columns t,u,y,x_<state>..."""
    try:
        csv_content = frame_to_csv(trajectory_to_frame(_run_simulation(request)))
    except (WorkbenchError, ValueError) as e:
        logger.error(f"CSV export failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))

    return StreamingResponse(
        io.BytesIO(csv_content.encode("utf-8")),
        media_type="text/csv",
        headers={"Content-Disposition": "attachment; filename=trajectory.csv"},
    )
