from fastapi import APIRouter, HTTPException
import logging
import math

from config.settings import get_settings
from models.api_models import IdentifyRequest, IdentifyResponse
from routers.simulation import resolve_model, solver_for
from services.identifiability_service import identifiability_service
from services.signal_service import parse_signal_spec
from utils.errors import WorkbenchError, http_status_for

logger = logging.getLogger(__name__)
router = APIRouter(tags=["Identifiability"])


@router.post("/identify", response_model=IdentifyResponse)
async def identify(request: IdentifyRequest) -> IdentifyResponse:
    """
    Sensitivity Gram matrix and Cramer-Rao bounds of one experiment

    Parameters along a null direction of the Gram matrix get an unbounded
    (null) variance bound.
    """
    try:
        system, params = resolve_model(request)
        S = identifiability_service.sensitivity_trajectories(
            system, params, parse_signal_spec(request.signal), request.span, solver_for(request), request.free,
        )
        gram = identifiability_service.gram_matrix(S, request.tol)
        sigma = request.sigma_noise or get_settings().nominal_noise
        fisher = identifiability_service.fisher_cramer_rao(S, sigma, request.tol)
    except (WorkbenchError, ValueError) as e:
        logger.error(f"Identifiability analysis failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))

    logger.info(f"Gram rank {gram.rank} of {len(gram.param_names)}")
    return IdentifyResponse(
        param_names=gram.param_names,
        gram=gram.G,
        eigenvalues=gram.eigenvalues,
        rank=gram.rank,
        null_directions=gram.null_directions,
        sigma_noise=sigma,
        crb=[bound if math.isfinite(bound) else None for bound in fisher.crb],
    )
