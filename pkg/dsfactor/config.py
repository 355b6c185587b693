import logging
import os
from dataclasses import dataclass

from dsfactor.utils.errors import ConfigError


@dataclass
class Settings:
    threads: int
    seed: int
    log_level: str


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value}")
    return value


def load_settings() -> Settings:
    from dotenv import load_dotenv
    load_dotenv()
    threads = _int_env("DSFACTOR_THREADS", 0)
    seed = _int_env("DSFACTOR_SEED", 0)
    level = os.getenv("DSFACTOR_LOG_LEVEL", "INFO").strip().upper() or "INFO"
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"Unknown DSFACTOR_LOG_LEVEL {level!r}")
    return Settings(threads=threads, seed=seed, log_level=level)
