import os
import yaml
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv

from src.core.errors import ConfigValidationError

logger = logging.getLogger(__name__)

# DUALGRAPH_CONFIG_PATH may come from a .env file
load_dotenv()

CONFIG_ENV_VAR = "DUALGRAPH_CONFIG_PATH"


class ConfigManager:
    """
    Singleton class to load and serve the YAML defaults.
    Keeps tolerances and solver knobs out of the numerical code.
    """

    _instance = None
    _config = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
            cls._instance._load_config()
        return cls._instance

    def _load_config(self):
        # 1. Environment variable wins when it points to an existing file
        env_config_path = os.getenv(CONFIG_ENV_VAR)

        if env_config_path and Path(env_config_path).exists():
            config_path = Path(env_config_path)
        else:
            # 2. Walk upwards to find the repository's configs directory
            current_dir = Path(__file__).resolve().parent
            config_path = None

            while current_dir.name != "" and current_dir.name != "/":
                potential_path = current_dir / "configs" / "system_config.yaml"
                if potential_path.exists():
                    config_path = potential_path
                    break
                current_dir = current_dir.parent

            if config_path is None:
                raise FileNotFoundError(
                    "CRITICAL: Could not locate 'configs/system_config.yaml' in any parent directory."
                )

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                self._config = yaml.safe_load(f) or {}
            logger.info(f"✅ [ConfigManager] System configuration loaded from: {config_path}")
        except Exception as e:
            logger.critical(f"❌ [ConfigManager] Failed to load config file: {e}")
            raise

    def reload(self):
        self._load_config()

    def get_section(self, name: str) -> Dict[str, Any]:
        return dict(self._config.get(name, {}) or {})

    def get_tolerance(self, name: str) -> float:
        tolerances = self._config.get("tolerances", {})
        if name not in tolerances:
            raise ConfigValidationError(f"Unknown tolerance '{name}'")
        return float(tolerances[name])


def load_user_config(path: Union[str, Path, None]) -> Dict[str, Any]:
    """Read a user JSON/YAML file (YAML parses JSON too). ``None`` gives ``{}``."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"Could not parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigValidationError(f"Top level of {path} must be a mapping")
    logger.info(f"📖 [ConfigManager] User configuration read from: {path}")
    return data


def merged_section(
    section: str, overrides: Optional[Dict[str, Any]], allowed: set
) -> Dict[str, Any]:
    """YAML defaults for ``section`` overlaid with ``overrides``; unknown keys are rejected."""
    values = {k: v for k, v in config.get_section(section).items() if k in allowed}
    for key, value in (overrides or {}).items():
        if key not in allowed:
            raise ConfigValidationError(f"Unknown key '{key}' for section '{section}'")
        values[key] = value
    return values


# Global instance to be imported by other modules
config = ConfigManager()
