from pydantic_settings import BaseSettings
from functools import lru_cache
from typing import Optional
from enum import Enum

class EnvironmentType(str, Enum):
    DEVELOPMENT = "development"
    PRODUCTION = "production"
    TESTING = "testing"

class Settings(BaseSettings):
    APP_NAME: str = "ReFocus"
    SEED: Optional[int] = None
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "runs"
    ENVIRONMENT: EnvironmentType = EnvironmentType.DEVELOPMENT

    class Config:
        env_file = ".env"
        env_prefix = "REFOCUS_"
        use_enum_values = True

@lru_cache()
def get_settings():
    return Settings()
