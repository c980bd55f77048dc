"""Application configuration"""

import os
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings"""

    model_config = SettingsConfigDict(env_prefix="NAVSIM_", case_sensitive=True)

    PROJECT_NAME: str = "navsim"

    # Earth-Moon system constants (normalized rotating frame)
    EARTH_MOON_MU: float = 0.012150585
    DU_KM: float = 384400.0
    TU_SECONDS: float = 375190.0

    # Logging
    LOG_DIR: str = os.getenv(
        "NAVSIM_LOG_DIR",
        str(Path.home() / ".navsim" / "logs")
    )
    LOG_LEVEL: str = "INFO"

    # Numerical guards
    PROXIMITY_GUARD_DU: float = 1e-6
    DEGENERATE_DISTANCE_DU: float = 1e-12
    COLLINEARITY_THRESHOLD: float = 1e-4
    HURWITZ_MARGIN: float = 1e-9
    ILL_POSED_CONDITION: float = 1e12

    # Reporting
    SETTLE_TIME_TU: float = 0.5
    TREND_WINDOW_TU: float = 1.0
    TREND_CONFIDENCE: float = 0.95
    CSV_SIGNIFICANT_DIGITS: int = 17


settings = Settings()
