"""
Configuration models and loaders: training configs from JSON files with
CLI overrides, generator configs from named presets
"""
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

# Add scripts directory to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'scripts'))
from errors import ConfigError
from hifinet_model import VARIANTS, LossWeights, TrainConfig
from road_network import GENERATOR_PRESETS, GeneratorConfig

__all__ = [
    "VARIANTS", "LossWeights", "TrainConfig", "GeneratorConfig", "GENERATOR_PRESETS",
    "load_train_config", "generator_config", "config_to_json",
]


def _validation_detail(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        location = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def _drop_unset(overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    return {k: v for k, v in (overrides or {}).items() if v is not None}


def load_train_config(path: Optional[Union[str, Path]] = None,
                      overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """
    Build a TrainConfig from an optional JSON file plus flag overrides

    Args:
        path: JSON file following the TrainConfig schema (unknown keys are rejected)
        overrides: top-level values that win over the file; None values are ignored

    Returns:
        Validated TrainConfig

    Raises:
        ConfigError: unreadable file, invalid JSON or a schema violation
    """
    payload: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: expected a JSON object at the top level")

    payload.update(_drop_unset(overrides))
    try:
        return TrainConfig.model_validate(payload)
    except ValidationError as e:
        source = f"{path}: " if path is not None else ""
        raise ConfigError(f"{source}{_validation_detail(e)}") from e


def generator_config(preset: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> GeneratorConfig:
    """
    Generator settings from a named preset (grid2, grid10, grid20) with overrides

    Raises:
        ConfigError: unknown preset or invalid values
    """
    base: Dict[str, Any] = {}
    if preset is not None:
        if preset not in GENERATOR_PRESETS:
            raise ConfigError(f"unknown preset '{preset}', expected one of {', '.join(sorted(GENERATOR_PRESETS))}")
        base = GENERATOR_PRESETS[preset].model_dump()
    base.update(_drop_unset(overrides))
    try:
        return GeneratorConfig.model_validate(base)
    except ValidationError as e:
        raise ConfigError(_validation_detail(e)) from e


def config_to_json(config: TrainConfig) -> str:
    """Canonical JSON echo of a config, loss weights keyed by their file names"""
    return json.dumps(config.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)
