from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Ignore unrelated keys in .env / environment
    model_config = SettingsConfigDict(extra='ignore', env_file=".env", env_prefix="IDENT_")

    # Application
    app_name: str = "Identifiability Workbench API"
    app_version: str = "1.0.0"
    debug: bool = False
    log_level: str = "INFO"

    # Integrator
    solver_step: float = 1e-3
    divergence_bound: float = 1e12

    # Linear analysis
    rank_tolerance: float = 1e-9
    equivalence_tolerance: float = 1e-9
    ridge_scale: float = 1e-8

    # Identifiability
    gram_rank_tolerance: float = 1e-6
    zero_sensitivity_floor: float = 1e-12

    # Estimation
    nominal_noise: float = 1e-2
    default_seed: int = 0
    posterior_cells: int = 141
    fit_max_iterations: int = 200


def get_settings() -> Settings:
    return Settings()
