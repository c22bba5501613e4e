from fastapi import FastAPI, Request, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import logging
from datetime import datetime

from routers import identifiability, lti, simulation
from config.settings import get_settings
from services.system_service import model_registry

settings = get_settings()

# Configure logging
logging.basicConfig(
    level=settings.log_level,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

# Initialize FastAPI
app = FastAPI(
    title=settings.app_name,
    description="Simulation, linear analysis and identifiability of small ODE input/output models",
    version=settings.app_version,
    docs_url="/docs",
    redoc_url="/redoc"
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(simulation.router)
app.include_router(lti.router)
app.include_router(identifiability.router)


@app.get("/")
async def root():
    """API information and available endpoints"""
    return {
        "name": settings.app_name,
        "version": settings.app_version,
        "description": "Which parameters of a model can experiments reveal, and with which inputs",
        "features": [
            "Fixed-step RK4 simulation with input breakpoints",
            "Steady-state gain, Markov parameters and similarity of linear systems",
            "Sensitivity Gram matrix and Cramer-Rao bounds",
        ],
        "endpoints": {
            "models": "/models",
            "model_detail": "/models/{model_id}",
            "simulate": "/simulate",
            "simulate_csv": "/simulate/csv",
            "gain": "/lti/gain",
            "equivalence": "/lti/equivalence",
            "responses": "/lti/response",
            "identify": "/identify",
            "health_check": "/health",
            "api_documentation": "/docs",
        }
    }


@app.get("/health")
async def health_check():
    """Service health and configuration summary"""
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "models": model_registry.ids(),
        "solver": {"method": "rk4", "default_step": settings.solver_step},
        "api_info": {
            "version": settings.app_version,
            "debug_mode": settings.debug,
            "documentation_url": "/docs",
        }
    }


@app.exception_handler(404)
async def not_found_handler(request: Request, exc: HTTPException):
    detail = getattr(exc, "detail", None)
    return JSONResponse(
        status_code=404,
        content={
            "error": "Not found",
            "detail": detail if detail and detail != "Not Found" else f"No endpoint at {request.url.path}",
            "documentation": "/docs"
        }
    )


@app.exception_handler(500)
async def internal_error_handler(request: Request, exc: Exception):
    logger.error(f"Internal server error: {exc}")
    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal server error",
            "timestamp": datetime.now().isoformat(),
        }
    )


if __name__ == "__main__":
    import uvicorn

    logger.info(f"Starting {settings.app_name} v{settings.app_version}")
    logger.info(f"Registry models: {', '.join(model_registry.ids())}")

    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=8000,
        reload=True if settings.debug else False,
        log_level="info"
    )
