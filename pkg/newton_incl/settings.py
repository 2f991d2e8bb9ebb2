from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="NEWTON_INCL_", extra="ignore")
    seed: int = 0
    feas_tol: float = 1e-10
    opt_tol: float = 1e-10
    max_iter: int = 50
    residual_tol: float = 1e-10
    step_tol: float = 1e-12
    samples: int = 1000
    workers: int = 1
    log_level: str = "WARNING"

settings = Settings()
