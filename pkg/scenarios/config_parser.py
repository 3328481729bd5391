"""
Scenario file parser - loads YAML scenario documents into ScenarioConfig
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import ValidationError

from simulator.models import ScenarioConfig


class ConfigError(ValueError):
    """Scenario validation failure with the dotted paths of the offending fields"""

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{path}: {message}" for path, message in problems))

    def lines(self) -> List[str]:
        return [f"config error at {path}: {message}" for path, message in self.problems]


def deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    """
    Merge overlay into a copy of base.

    Nested dicts merge key by key; any other overlay value (lists included)
    replaces the base value.
    """
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_yaml(file_path: str) -> Dict[str, Any]:
    """
    Read a scenario YAML file.

    Args:
        file_path: Path to the YAML document

    Returns:
        Top-level mapping (empty for an empty file)

    Raises:
        ConfigError: unreadable YAML or a non-mapping document
    """
    path = Path(file_path)
    if not path.exists():
        raise ConfigError([("<file>", f"{file_path} does not exist")])
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError([("<file>", f"invalid YAML in {file_path}: {e}")]) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([("<root>", f"{file_path} must contain a mapping, got {type(data).__name__}")])
    return data


def _error_path(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def validate_scenario(document: Dict[str, Any]) -> ScenarioConfig:
    """
    Validate a merged scenario document.

    Raises:
        ConfigError: one (path, message) per pydantic error
    """
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError([(_error_path(err["loc"]), err["msg"]) for err in e.errors()]) from e


def resolve_scenario(
    preset: Optional[Dict[str, Any]] = None,
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Tuple[ScenarioConfig, Dict[str, Any]]:
    """
    Build a scenario from a preset, a config file and CLI overrides, in that order.

    Args:
        preset: Base document (a preset), if any
        config_path: YAML file merged over the preset
        overrides: Final top-level overrides; None values are ignored

    Returns:
        (validated ScenarioConfig, merged raw document)
    """
    document: Dict[str, Any] = dict(preset or {})
    if config_path:
        document = deep_merge(document, load_yaml(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            document[key] = value
    if not document:
        raise ConfigError([("<root>", "no scenario given: pass --preset and/or --config")])
    return validate_scenario(document), document
