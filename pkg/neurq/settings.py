"""Settings loading for neurq.

Defaults come from the packaged settings.yaml; a user file and
``--set key.path=value`` overrides are deep-merged on top.
"""

import copy
from pathlib import Path
from typing import Any, Iterable, Optional

import structlog
import yaml

from neurq.config.types import NeurqConfig
from neurq.errors import ConfigError
from neurq.resources import get_default_settings_yaml

logger = structlog.get_logger(__name__)


def default_settings_dict() -> dict:
    """Parsed packaged defaults as a plain dict."""
    return yaml.safe_load(get_default_settings_yaml()) or {}


def _deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge override into base (override wins)."""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def parse_override(item: str) -> dict:
    """Turn ``executor.engines=16`` into ``{"executor": {"engines": 16}}``.

    The value is parsed as YAML so numbers, booleans, null and lists work.
    """
    if "=" not in item:
        raise ConfigError(f"override must look like key.path=value, got {item!r}")
    path, raw = item.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"empty key in override {item!r}")
    value: Any = yaml.safe_load(raw) if raw.strip() else None
    for key in reversed(keys):
        value = {key: value}
    return value


def merged_settings(
    path: Optional[Path] = None,
    overrides: Iterable[str | dict] = (),
) -> dict:
    """Defaults, then the user file, then each override in order."""
    data = default_settings_dict()
    if path is not None:
        if not path.exists():
            raise ConfigError(f"settings file not found: {path}")
        data = _deep_merge(data, yaml.safe_load(path.read_text()) or {})
    for item in overrides:
        data = _deep_merge(data, parse_override(item) if isinstance(item, str) else item)
    return data


def load_settings(
    path: Optional[Path] = None,
    overrides: Iterable[str | dict] = (),
) -> NeurqConfig:
    """Load the effective configuration.

    Args:
        path: Optional user settings.yaml (partial files are fine)
        overrides: ``key.path=value`` strings or nested dicts

    Returns:
        Validated NeurqConfig
    """
    data = merged_settings(path, overrides)
    config = NeurqConfig.from_dict(data)
    logger.debug("settings_loaded", path=str(path) if path else None, seed=config.seed)
    return config
