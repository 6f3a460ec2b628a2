"""Environment settings (BDOTS_THREADS, BDOTS_LOG_LEVEL) loaded through python-dotenv."""
import logging
import os
from typing import List, Optional

from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    dotenv_path: Optional[str] = None

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, v: str) -> str:
        v = v.strip().upper()
        if v not in LOG_LEVELS:
            raise ValueError(f"must be one of {', '.join(LOG_LEVELS)}")
        return v


def load_env() -> Optional[str]:
    """Load the nearest .env above the working directory; returns its path or None."""
    path = find_dotenv(usecwd=True)
    if path and load_dotenv(path):
        return path
    return None


def get_settings() -> Settings:
    path = load_env()
    raw = {"dotenv_path": path}
    threads = os.getenv("BDOTS_THREADS")
    if threads not in (None, ""):
        raw["threads"] = threads
    level = os.getenv("BDOTS_LOG_LEVEL")
    if level not in (None, ""):
        raw["log_level"] = level
    try:
        return Settings.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigurationError(f"invalid environment settings ({problems})") from e


def check_env() -> List[str]:
    """Human-readable report of where settings came from, for ``bdots check-env``."""
    lines = []
    path = find_dotenv(usecwd=True)
    if not path:
        lines.append("No .env file found from the current directory upward; using the process environment.")
    else:
        lines.append(f"Found .env at: {path}")
        if load_dotenv(path):
            lines.append("SUCCESS: .env loaded by python-dotenv.")
        else:
            lines.append("WARNING: .env is empty or could not be parsed.")
    settings = get_settings()
    source = "BDOTS_THREADS" if os.getenv("BDOTS_THREADS") else "default"
    lines.append(f"threads   = {settings.threads} ({source})")
    source = "BDOTS_LOG_LEVEL" if os.getenv("BDOTS_LOG_LEVEL") else "default"
    lines.append(f"log_level = {settings.log_level} ({source})")
    lines.append(f"cpu_count = {os.cpu_count()}")
    return lines
