from fastapi import APIRouter, HTTPException
import logging

from models.api_models import (
    EquivalenceRequest, EquivalenceResponse, GainResponse, LinearSystemPayload, ResponseRequest, SampledResponses,
)
from models.system_models import LinearSystem
from services.lti_service import lti_service
from services.system_service import build_linear_system
from utils.errors import WorkbenchError, http_status_for

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/lti", tags=["Linear Analysis"])


def _system(payload: LinearSystemPayload) -> LinearSystem:
    return build_linear_system(payload.A, payload.b, payload.c)


@router.post("/gain", response_model=GainResponse)
async def steady_state_gain(payload: LinearSystemPayload) -> GainResponse:
    """Steady-state gain -c A^-1 b"""
    try:
        return GainResponse(gain=lti_service.steady_state_gain(_system(payload)))
    except WorkbenchError as e:
        logger.error(f"Gain calculation failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))


@router.post("/equivalence", response_model=EquivalenceResponse)
async def equivalence(request: EquivalenceRequest) -> EquivalenceResponse:
    """
    Input/output equivalence of two minimal systems

    When both have the same dimension the similarity transform T is returned.
    """
    try:
        s1, s2 = _system(request.first), _system(request.second)
        if not lti_service.io_equivalent(s1, s2, request.tol):
            return EquivalenceResponse(equivalent=False)
        if s1.n != s2.n:
            return EquivalenceResponse(equivalent=True)
        certificate = lti_service.find_similarity(s1, s2, request.tol)
        logger.info(f"Equivalent systems, similarity residual {certificate.residual:.3g}")
        return EquivalenceResponse(equivalent=True, T=certificate.T, residual=certificate.residual)
    except WorkbenchError as e:
        logger.error(f"Equivalence check failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))


@router.post("/response", response_model=SampledResponses)
async def responses(request: ResponseRequest) -> SampledResponses:
    """Sampled impulse and step responses on 0, h, ..., t_end"""
    try:
        system = _system(request.system)
        n = int(round(request.t_end / request.h)) + 1
        k = lti_service.sample_impulse_response(system, n, request.h)
        K = lti_service.sample_step_response(system, n, request.h)
        return SampledResponses(times=k.times().tolist(), impulse=k.values, step=K.values)
    except WorkbenchError as e:
        logger.error(f"Response sampling failed: {e}")
        raise HTTPException(status_code=http_status_for(e), detail=str(e))
