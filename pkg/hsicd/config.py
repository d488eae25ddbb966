"""
Environment settings and logging setup
"""
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import ConfigError
from .schemas import PipelineConfig

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Settings(BaseSettings):
    """Process-level settings read from HSICD_* variables or .env"""
    model_config = SettingsConfigDict(env_prefix="HSICD_", env_file=".env", extra="ignore")

    log_level: str = "WARNING"
    workers: int = 1
    config_path: Optional[Path] = None
    output_dir: Path = Path("runs")


def get_settings() -> Settings:
    return Settings()


def setup_logging(level: str = "WARNING") -> None:
    """Send all library logging to stderr; stdout stays reserved for JSON summaries."""
    root = logging.getLogger("hsicd")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())
    root.propagate = False


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Build the effective pipeline config: defaults, then the JSON file, then overrides.
    Raises ConfigError for unreadable files or values failing validation.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    data = _merge(data, overrides or {})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"invalid config at {location}: {first['msg']}") from e
