from functools import lru_cache

from pydantic import BaseSettings, conint, confloat


class Settings(BaseSettings):
    log_level: str = 'INFO'
    http_concurrency: conint(ge=1) = 10
    http_max_try_count: conint(ge=1) = 3
    http_timeout: confloat(gt=0) = 5.0
    default_limit: conint(ge=1) = 10
    max_limit: conint(ge=1) = 1000

    class Config:
        env_prefix = 'HIERSEARCH_'


@lru_cache()
def get_settings() -> Settings:
    return Settings()
