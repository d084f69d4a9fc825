"""
Configuration management for the sensor layout simulator.
Handles loading and saving the JSON defaults file.
"""

import copy
import os
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "sampling": {
        "interior_strata": 8,
        "boundary_samples": 32,
        "rng_seed": 0,
        "jitter": True,
        "rule": "gauss"
    },
    "layout": {
        "kind": "curvilinear",
        "r1": 4,
        "r2": 4
    },
    "training": {
        "epochs": 14,
        "learning_rate": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "batch_size": 64,
        "layout_freeze_epochs": 0,
        "shuffle_seed": 0,
        "init_seed": 0,
        "sensor_seed": 0,
        "channels": 1,
        "hidden": [128, 64]
    },
    "gradcheck": {
        "fd_step": 1e-4,
        "tolerance": 1e-2
    },
    "runtime": {
        "threads": 0,
        "log_level": "INFO"
    }
}


def _deep_merge(base, override):
    """Return base updated recursively with override."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Config:
    """Handles application configuration."""

    # Singleton instance
    _instance = None

    def __new__(cls):
        """Create a new Config instance or return existing one (singleton)."""
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """Initialize the configuration manager."""
        if self._initialized:
            return

        self._initialized = True

        self.config_dir = Path("config")
        self.config_path = self.config_dir / "sensor_config.json"
        self.settings = None

        self._load_config()

        logger.debug("Config manager initialized")

    @classmethod
    def load(cls, path):
        """Point the singleton at another configuration file.

        Args:
            path: Path to a JSON configuration file

        Returns:
            The Config instance
        """
        config = cls()
        config.config_path = Path(path)
        config.config_dir = config.config_path.parent
        config._load_config(required=True)
        return config

    @classmethod
    def reset(cls):
        """Forget the singleton so the next Config() reloads from disk."""
        cls._instance = None

    def _load_config(self, required=False):
        """Load the configuration file, filling gaps from the defaults."""
        if not self.config_path.exists():
            if required:
                raise FileNotFoundError(f"Configuration file not found: {self.config_path}")
            self.settings = copy.deepcopy(DEFAULT_CONFIG)
            logger.debug("No configuration file, using defaults")
            return

        try:
            with open(self.config_path, 'r') as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Error parsing {self.config_path}: {e}")
            raise

        self.settings = _deep_merge(DEFAULT_CONFIG, loaded)
        logger.info(f"Configuration loaded from {self.config_path}")

    def save(self):
        """Save the current configuration to file.

        Returns:
            True if successful, False otherwise
        """
        try:
            os.makedirs(self.config_dir, exist_ok=True)

            with open(self.config_path, 'w') as f:
                json.dump(self.settings, f, indent=4)

            logger.info("Configuration saved")
            return True
        except OSError as e:
            logger.error(f"Error saving config: {str(e)}")
            return False

    def _section(self, name):
        if self.settings is None:
            self._load_config()
        return copy.deepcopy(self.settings[name])

    def get_sampling_config(self):
        """Get Monte-Carlo sampling defaults.

        Returns:
            Sampling configuration dictionary
        """
        return self._section("sampling")

    def get_layout_config(self):
        """Get default layout kind and grid size.

        Returns:
            Layout configuration dictionary
        """
        return self._section("layout")

    def get_training_config(self):
        """Get joint training defaults.

        Returns:
            Training configuration dictionary
        """
        return self._section("training")

    def get_gradcheck_config(self):
        """Get finite-difference check defaults.

        Returns:
            Gradient check configuration dictionary
        """
        return self._section("gradcheck")

    def get_runtime_config(self):
        """Get thread count and log level defaults.

        Returns:
            Runtime configuration dictionary
        """
        return self._section("runtime")

    def update_section(self, name, values):
        """Update one configuration section in memory.

        Args:
            name: Section name
            values: Dictionary of keys to overwrite
        """
        if name not in DEFAULT_CONFIG:
            raise KeyError(f"Unknown configuration section: {name}")
        self.settings[name] = _deep_merge(self.settings[name], values)
